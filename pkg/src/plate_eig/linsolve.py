"""Sparse direct solvers for the mixed source problem.

Two routes are offered.  :func:`factorize` is a general sparse LU of the
whole matrix.  :class:`BlockFactorization` exploits the block-triangular
structure of the mixed operator: a Poisson solve for ``w``, a Stokes-type
solve for ``(phi, p)`` and a second Poisson solve for ``u``.  Both are exact
inverses of the same matrix; the block route is the one that scales.
"""
from __future__ import annotations

import logging
from collections import Counter

import numpy as np
import qdldl
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .assembly import MixedSystem
from .errors import InvalidArgumentError, SingularMatrixError

log = logging.getLogger(__name__)

#: Number of factorizations performed, by kind.  Tests use it to check reuse.
COUNTS: Counter = Counter()


class Factorization:
    """Sparse LU of a square matrix with a couple of refinement sweeps."""

    def __init__(self, A, refine=2):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise InvalidArgumentError("matrix must be square")
        self.A = A
        self.refine = refine
        try:
            self._lu = spl.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
        diag = np.abs(self._lu.U.diagonal())
        if not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise SingularMatrixError("matrix is numerically singular")
        COUNTS["lu"] += 1

    @property
    def shape(self):
        return self.A.shape

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        for _ in range(self.refine):
            x += self._lu.solve(rhs - self.A @ x)
        return x


def factorize(A) -> Factorization:
    return Factorization(A)


class _SPDSolver:
    def __init__(self, K):
        try:
            self._f = qdldl.Solver(sp.csc_matrix(K))
        except (RuntimeError, ValueError) as exc:
            raise SingularMatrixError(f"Poisson block factorization failed: {exc}",
                                      block="poisson") from exc
        self.K = K

    def solve(self, rhs):
        return self._f.solve(rhs)


class _SaddleSolver:
    """LDL^T of a saddle matrix regularized by ``-delta`` on its multiplier block.

    Iterative refinement against the unregularized matrix recovers the exact
    solution; a refinement that stalls means the saddle matrix is singular.
    """

    def __init__(self, S, n_primal, delta=1e-10, tol=1e-14, max_refine=12):
        self.S = sp.csc_matrix(S)
        d = np.zeros(S.shape[0])
        d[n_primal:] = -delta
        try:
            self._f = qdldl.Solver((self.S + sp.diags(d)).tocsc())
        except (RuntimeError, ValueError) as exc:
            raise SingularMatrixError(f"Stokes block factorization failed: {exc}",
                                      block="stokes") from exc
        self.tol = tol
        self.max_refine = max_refine

    def solve(self, rhs):
        nb = np.linalg.norm(rhs)
        x = self._f.solve(rhs)
        if nb == 0.0:
            return x
        res = np.inf
        for _ in range(self.max_refine):
            r = rhs - self.S @ x
            res = np.linalg.norm(r) / nb
            if res <= self.tol:
                return x
            x = x + self._f.solve(r)
        if not np.all(np.isfinite(x)) or res > 1e-8:
            raise SingularMatrixError(
                f"Stokes block solve did not converge (residual {res:.2e}); "
                "the discrete inf-sup condition may fail on this mesh", block="stokes")
        return x


def stokes_matrix(system: MixedSystem) -> sp.csc_matrix:
    """``[[L, R^T, 0], [R, 0, c], [0, c^T, 0]]`` on (phi, p, ell)."""
    b = system.blocks
    L = b["L"] + b.get("DL", 0)
    c = sp.csr_matrix(b["c"].reshape(-1, 1))
    return sp.bmat([[L, b["R"].T, None],
                    [b["R"], None, c],
                    [None, c.T, None]], format="csc")


class BlockFactorization:
    """Exact solver for an eliminated :class:`MixedSystem` by block substitution.

    For a right-hand side ``(r_v, r_psi, r_q, r_s, r_ell)`` it solves, in turn,
    ``K w = r_v``, the Stokes system for ``(phi, p, ell)`` with load
    ``r_psi - G w`` and ``K u = r_s - G^T phi``.  One Poisson and one Stokes
    factorization serve any number of right-hand sides.
    """

    def __init__(self, system: MixedSystem, delta=1e-10):
        if not system.eliminated:
            raise InvalidArgumentError("boundary conditions must be applied first")
        self.system = system
        b = system.blocks
        self._free = system.u_space.free_mask
        self.poisson = _SPDSolver((b["K"] + b["D"]).tocsc())
        self.n_phi = b["L"].shape[0]
        self.stokes = _SaddleSolver(stokes_matrix(system), self.n_phi, delta=delta)
        self._G = b["G"].tocsr()
        self._GT = self._G.T.tocsr()
        COUNTS["block"] += 1

    @property
    def shape(self):
        return self.system.A.shape

    def solve_w(self, r_v, r_s=None):
        """Poisson step for ``w`` (constrained entries taken from ``r_s``)."""
        t = r_v * self._free if r_s is None else np.where(self._free, r_v, r_s)
        return self.poisson.solve(t)

    def solve_stokes(self, r_psi, r_q, r_ell):
        y = self.stokes.solve(np.concatenate([r_psi, r_q, np.atleast_1d(r_ell)]))
        return y[:self.n_phi], y[self.n_phi:-1], y[-1]

    def solve(self, rhs):
        S = self.system
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (S.size,):
            raise InvalidArgumentError("right-hand side has the wrong length")
        r_v = rhs[S.field_slice("u")]
        r_psi = rhs[S.offsets["phi_x"]:S.offsets["p"]]
        r_q = rhs[S.field_slice("p")]
        r_s = rhs[S.field_slice("w")]
        r_ell = rhs[S.offsets["ell"]]
        w = self.solve_w(r_v, r_s)
        phi, p, ell = self.solve_stokes(r_psi - self._G @ w, r_q, r_ell)
        u = self.poisson.solve(np.where(self._free, r_s - self._GT @ phi, r_v))
        return np.concatenate([u, phi, p, w, [ell]])

    def as_operator(self):
        return spl.LinearOperator(self.shape, matvec=self.solve, dtype=float)


def solve_source_monolithic(system: MixedSystem, rhs, factorization=None):
    F = factorization if factorization is not None else factorize(system.A)
    return F.solve(rhs)


def solve_source_decomposed(system: MixedSystem, rhs, factorization=None):
    """Three sequential subsystem solves (Poisson, Stokes, Poisson)."""
    F = factorization if factorization is not None else BlockFactorization(system)
    return F.solve(rhs)


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r
