"""Multi-level correction scheme for the mixed plate eigenproblem.

At each level the eigenproblem is only solved on an augmented space made of
the (prolongated) coarsest space plus ``k`` correction vectors.  Each
correction comes from one source solve on the current fine level.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import MixedSystem, build_system, norm_gram
from .eigensolve import EigenPair, residuals, solve_dense, stability_constant
from .errors import DegenerateBasisError, InvalidArgumentError
from .linsolve import BlockFactorization
from .mesh import Triangulation, make_mesh, refine_uniform
from .spaces import build_prolongation

log = logging.getLogger(__name__)


@dataclass(eq=False)
class LevelHierarchy:
    meshes: list[Triangulation]
    systems: list[MixedSystem]
    scalar_prolongations: list[sp.csr_matrix]    # P2 space, level i -> i+1
    global_prolongations: list[sp.csr_matrix]    # whole mixed vector, level i -> i+1
    triple: str
    domain: str = "custom"

    @property
    def n_levels(self) -> int:
        return len(self.meshes)

    @property
    def finest(self) -> int:
        return len(self.meshes) - 1

    def mesh_sizes(self):
        return [m.mesh_size for m in self.meshes]

    def prolongate_u(self, u, start, stop=None):
        """Carry a u-space coefficient vector from level ``start`` to ``stop``."""
        stop = self.finest if stop is None else stop
        for lev in range(start, stop):
            u = self.scalar_prolongations[lev] @ u
        return u

    def coarse_basis(self, level) -> sp.csr_matrix:
        """Level-0 free dofs (incl. the multiplier) expressed on ``level``."""
        free0 = np.flatnonzero(self.systems[0].free_mask())
        Q = sp.identity(self.systems[0].size, format="csr")[:, free0]
        for lev in range(level):
            Q = self.global_prolongations[lev] @ Q
        return Q.tocsr()


def _global_prolongation(coarse: MixedSystem, fine: MixedSystem):
    pv = build_prolongation(coarse.u_space, fine.u_space).matrix
    pp = build_prolongation(coarse.p_space, fine.p_space).matrix
    return pv, sp.block_diag([pv, pv, pv, pp, pv, sp.identity(1)], format="csr")


def build_hierarchy(domain: str | Triangulation, n0: int, N: int, triple: str,
                    pattern: str = "crisscross") -> LevelHierarchy:
    """Nested meshes, eliminated systems and prolongations for levels 0..N."""
    if N < 0:
        raise InvalidArgumentError("N must be >= 0")
    if isinstance(domain, Triangulation):
        meshes, name = [domain], domain.domain
    else:
        meshes, name = [make_mesh(domain, n0, pattern=pattern)], domain
    for _ in range(N):
        meshes.append(refine_uniform(meshes[-1]))
    systems = [build_system(m, triple) for m in meshes]
    scalar, glob = [], []
    for c, f in zip(systems[:-1], systems[1:]):
        pv, pg = _global_prolongation(c, f)
        scalar.append(pv)
        glob.append(pg)
    return LevelHierarchy(meshes, systems, scalar, glob, triple, name)


@dataclass
class LevelRecord:
    level: int
    lambdas: np.ndarray
    pairs: list[EigenPair]
    theta: float
    basis_theta: float
    seconds: float
    residuals: np.ndarray = None     # relative residuals on the level's full system


@dataclass
class MultilevelResult:
    pairs: list[EigenPair]
    records: dict = field(default_factory=dict)

    def lambdas_at(self, level):
        return self.records[level].lambdas


class AugmentedSpace:
    """Columns ``[Q | U]``: prolongated coarse dofs ``Q`` (sparse) and corrections ``U``."""

    def __init__(self, level, Q, U=None):
        self.level = level
        self.Q = Q
        self.U = np.zeros((Q.shape[0], 0)) if U is None else np.asarray(U)

    @property
    def n_columns(self):
        return self.Q.shape[1] + self.U.shape[1]

    def reduce(self, M) -> np.ndarray:
        """Dense ``Z^T M Z``."""
        MQ = M @ self.Q
        MU = M @ self.U
        qq = (self.Q.T @ MQ).toarray()
        qu = self.Q.T @ MU
        uq = self.U.T @ MQ
        uu = self.U.T @ MU
        return np.block([[qq, np.asarray(qu)], [np.asarray(uq), uu]])

    def expand(self, c) -> np.ndarray:
        nq = self.Q.shape[1]
        return self.Q @ c[:nq] + self.U @ c[nq:]


def _symmetrize(M):
    return 0.5 * (M + M.T)


def _reduced_solve(system, space, k, gram, check_theta, theta_min, level):
    At = space.reduce(system.A)
    Bt = space.reduce(system.B)
    asym = np.abs(At - At.T).max() / max(np.abs(At).max(), 1e-300)
    if asym > 1e-12:
        log.warning("reduced A asymmetry %.2e at level %d", asym, level)
    Gt = _symmetrize(space.reduce(gram))
    basis_theta = np.nan
    if space.U.shape[1]:
        # the multiplier column carries no norm; give it unit weight here
        Gb = Gt.copy()
        ell = Gb.shape[0] - space.U.shape[1] - 1
        Gb[ell, ell] += 1.0
        d = np.sqrt(np.diag(Gb))
        basis_theta = float(np.linalg.eigvalsh(Gb / np.outer(d, d)).min())
        if basis_theta <= 1e-13:
            raise DegenerateBasisError(
                f"augmented basis is numerically dependent at level {level} "
                f"(theta={basis_theta:.2e})", level=level)
    small = solve_dense(_symmetrize(At), _symmetrize(Bt), k)
    X = np.column_stack([space.expand(p.vector) for p in small])
    pairs = [EigenPair(p.lam, X[:, j], p.residual) for j, p in enumerate(small)]
    theta = stability_constant(np.column_stack([p.vector for p in small]), Gt)
    if check_theta and theta < theta_min:
        raise DegenerateBasisError(
            f"stability constant {theta:.3f} < {theta_min} at level {level}", level=level)
    return pairs, theta, basis_theta


def _level_residuals(system, pairs):
    X = np.column_stack([p.vector for p in pairs])
    return residuals(system.A, system.B, np.array([p.lam for p in pairs]), X)


def _check_growth(res, prev, level, factor=2.0):
    # Galerkin residuals shrink under refinement; growth flags a spurious pair
    for j in np.flatnonzero(res > factor * prev):
        log.warning("pair %d residual grew from %.2e to %.2e at level %d (possible spurious mode)",
                    j + 1, prev[j], res[j], level)


def multilevel_eigs(hier: LevelHierarchy, k: int, theta_min: float = 0.1,
                    check_theta: bool = True, max_fraction: float = 0.25,
                    on_level=None) -> MultilevelResult:
    """Run the correction scheme over all levels of ``hier``.

    Returns the ``k`` pairs on the finest level together with a record of
    the eigenvalues obtained in every augmented space (level 0 is the plain
    coarse solve).  ``on_level(record)`` is called as each level finishes.
    """
    n_free0 = int(hier.systems[0].free_mask().sum())
    if k < 1 or k > max_fraction * n_free0:
        raise InvalidArgumentError(f"k={k} must be in [1, {max_fraction} * dim G0 = {n_free0}]")
    result = MultilevelResult(pairs=[])
    space = AugmentedSpace(0, hier.coarse_basis(0))
    gram = norm_gram(hier.systems[0])
    tic = time.perf_counter()
    pairs, theta, btheta = _reduced_solve(hier.systems[0], space, k, gram,
                                          check_theta, theta_min, 0)
    result.records[0] = LevelRecord(0, np.array([p.lam for p in pairs]), pairs, theta,
                                    btheta, time.perf_counter() - tic,
                                    _level_residuals(hier.systems[0], pairs))
    if on_level is not None:
        on_level(result.records[0])
    for i in range(1, hier.n_levels):
        tic = time.perf_counter()
        system = hier.systems[i]
        F = BlockFactorization(system)
        P = hier.global_prolongations[i - 1]
        corrections = []
        for p in pairs:
            # a(u_hat, v) = (1/mu) b(u_tilde, v) on the finer space
            rhs = p.lam * (system.B @ (P @ p.vector))
            corrections.append(F.solve(rhs))
        del F
        space = AugmentedSpace(i, hier.coarse_basis(i), np.column_stack(corrections))
        gram = norm_gram(system)
        pairs, theta, btheta = _reduced_solve(system, space, k, gram, check_theta, theta_min, i)
        res = _level_residuals(system, pairs)
        result.records[i] = LevelRecord(i, np.array([p.lam for p in pairs]), pairs, theta,
                                        btheta, time.perf_counter() - tic, res)
        if i >= 2:
            _check_growth(res, result.records[i - 1].residuals, i)
        log.info("level %d: lambda=%s theta=%.3f", i, result.records[i].lambdas, theta)
        if on_level is not None:
            on_level(result.records[i])
    result.pairs = pairs
    return result


# -- eigenfunction errors -----------------------------------------------------

def h1_norm(K, M, e):
    return float(np.sqrt(max(e @ (K @ e) + e @ (M @ e), 0.0)))


def u_error(u_coarse, fine_us, fine_lams, j, K, M, cluster_tol=1e-6):
    """H1 distance of a prolongated, L2-normalized ``u_coarse`` to reference ``j``.

    If the reference eigenvalue belongs to a numerical cluster the reference
    is replaced by the L2 projection of ``u_coarse`` onto the cluster span,
    renormalized; otherwise it is the reference function with the sign that
    gives the smaller error.
    """
    u = u_coarse / np.sqrt(u_coarse @ (M @ u_coarse))
    lam = fine_lams[j]
    cluster = np.flatnonzero(np.abs(fine_lams - lam) <= cluster_tol * abs(lam))
    if len(cluster) > 1:
        V = fine_us[:, cluster]
        coef = V.T @ (M @ u)
        ref = V @ coef
        ref /= np.sqrt(ref @ (M @ ref))
        return h1_norm(K, M, u - ref)
    ref = fine_us[:, j]
    return min(h1_norm(K, M, u - ref), h1_norm(K, M, u + ref))


def _clusters(lams, tol):
    lams = np.asarray(lams, dtype=float)
    return [np.flatnonzero(np.abs(lams - l) <= tol * abs(l)) for l in lams]


def match_indices(u_list, fine_us, M, fine_lams=None, cluster_tol=1e-6):
    """Reference index per coarse function: itself unless correlation says otherwise.

    Indices within one reference eigenvalue cluster are interchangeable.
    """
    clusters = (_clusters(fine_lams, cluster_tol) if fine_lams is not None
                else [np.array([j]) for j in range(fine_us.shape[1])])
    out = []
    for j, u in enumerate(u_list):
        corr = np.abs(fine_us.T @ (M @ u))
        weight = np.array([np.linalg.norm(corr[c]) for c in clusters])
        best = int(np.argmax(weight))
        if j not in clusters[best] and weight[best] > 1.5 * weight[j]:
            log.warning("eigenfunction %d matched to reference %d (cluster crossing)", j, best)
            out.append(best)
        else:
            out.append(j)
    return out


def u_component_errors(hier: LevelHierarchy, level_us: dict, fine_lams, cluster_tol=1e-6):
    """Like :func:`eigenfunction_errors` but on u-coefficient vectors.

    ``level_us`` maps level -> list of u vectors on that level; the entry for
    the finest level is the reference.
    """
    N = hier.finest
    sysN = hier.systems[N]
    K, M = sysN.blocks["K"], sysN.blocks["M"]
    fine_us = np.column_stack(level_us[N])
    fine_lams = np.asarray(fine_lams, dtype=float)
    out = {}
    for lev, us in level_us.items():
        if lev == N:
            out[lev] = np.zeros(len(us))        # the reference against itself
            continue
        us = [hier.prolongate_u(u, lev) for u in us]
        idx = match_indices(us, fine_us, M, fine_lams, cluster_tol)
        out[lev] = np.array([u_error(u, fine_us, fine_lams, m, K, M, cluster_tol)
                             for u, m in zip(us, idx)])
    return out


def eigenfunction_errors(hier: LevelHierarchy, level_pairs: dict, finest_pairs=None,
                         cluster_tol=1e-6):
    """Per-level H1 errors of the u-components against the finest level.

    ``level_pairs`` maps level -> list of EigenPair on that level.  Returns
    ``{level: array of errors}``.
    """
    N = hier.finest
    level_pairs = dict(level_pairs)
    if finest_pairs is not None:
        level_pairs[N] = finest_pairs
    level_us = {lev: [p.vector[hier.systems[lev].field_slice("u")] for p in pairs]
                for lev, pairs in level_pairs.items()}
    return u_component_errors(hier, level_us, [p.lam for p in level_pairs[N]], cluster_tol)
