"""Block assembly of the four-field mixed plate operator.

Unknowns are ordered ``(u, phi_x, phi_y, p, w, ell)`` where ``ell`` is the
scalar multiplier enforcing zero mean on ``p``.  Test functions are ordered
``(v, psi_x, psi_y, q, s, ell')``, i.e. the equation tested by ``v`` comes
first.  With this pairing both matrices are symmetric::

        u      phi     p     w
    v [ 0      0       0     K  ]          B = [ M 0 0 0 ]
  psi [ 0      L       R^T   G  ]              [ 0 0 0 0 ]
    q [ 0      R       0     0  ]  + ell       [ 0 0 0 0 ]
    s [ K      G^T     0     0  ]              [ 0 0 0 0 ]

with K the scalar stiffness, L = diag(K, K), R_ij = (q_i, rot phi_j),
G_ij = (grad w_j, psi_i) and M the scalar mass matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError
from .mesh import Triangulation, geometry
from .spaces import FESpace, basis_gradients, basis_values, build_space

TRIPLES = {"A": "P0", "B": "P1"}
FIELDS = ("u", "phi_x", "phi_y", "p", "w", "ell")


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # barycentric, (Q, 3)
    weights: np.ndarray  # reference-triangle weights, sum 1/2
    degree: int


def _dunavant4():
    a1, w1 = 0.44594849091596488631832925388305, 0.22338158967801146569500700843312
    a2, w2 = 0.091576213509770743459571463402202, 0.10995174365532186763832632490021
    pts = []
    for a in (a1, a2):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
    weights = 0.5 * np.array([w1] * 3 + [w2] * 3)
    return QuadratureRule(np.array(pts), weights, 4)


DEGREE4 = _dunavant4()


def _assemble(rows_map, cols_map, local, shape):
    """Scatter per-element blocks (T, nr, nc) into a CSR matrix (duplicates summed)."""
    nt, nr, nc = local.shape
    rows = np.broadcast_to(rows_map[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(cols_map[:, None, :], local.shape).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _symmetric(mat):
    """Exactly symmetric copy; duplicate summation order otherwise leaves 1-ulp noise."""
    out = (0.5 * (mat + mat.T)).tocsr()
    out.sort_indices()
    return out


def _check_same_mesh(*spaces):
    mesh = spaces[0].mesh
    if any(s.mesh is not mesh for s in spaces):
        raise InvalidArgumentError("all spaces must live on the same mesh")
    return mesh


def mass_matrix(test: FESpace, trial: FESpace | None = None, quad=DEGREE4):
    trial = test if trial is None else trial
    _check_same_mesh(test, trial)
    area, _ = geometry(test.mesh)
    phi = basis_values(test.kind, quad.points)      # (Q, nr)
    chi = basis_values(trial.kind, quad.points)     # (Q, nc)
    ref = np.einsum("q,qi,qj->ij", quad.weights, phi, chi)
    local = 2.0 * area[:, None, None] * ref[None]
    mat = _assemble(test.dof_map, trial.dof_map, local, (test.dof_count, trial.dof_count))
    return _symmetric(mat) if trial is test else mat


def stiffness_matrix(space: FESpace, quad=DEGREE4):
    area, glam = geometry(space.mesh)
    dphi = basis_gradients(space.kind, quad.points, glam)      # (T, Q, n, 2)
    local = 2.0 * area[:, None, None] * np.einsum(
        "q,tqid,tqjd->tij", quad.weights, dphi, dphi)
    return _symmetric(_assemble(space.dof_map, space.dof_map, local,
                                (space.dof_count, space.dof_count)))


def gradient_coupling(vec_space: FESpace, scalar_space: FESpace, quad=DEGREE4):
    """Blocks ``G_c[i, j] = (d_c w_j, psi_i)`` for c = x, y; returns (Gx, Gy)."""
    mesh = _check_same_mesh(vec_space, scalar_space)
    area, glam = geometry(mesh)
    psi = basis_values(vec_space.kind, quad.points)                   # (Q, nr)
    dw = basis_gradients(scalar_space.kind, quad.points, glam)        # (T, Q, nc, 2)
    out = []
    for c in range(2):
        local = 2.0 * area[:, None, None] * np.einsum(
            "q,qi,tqj->tij", quad.weights, psi, dw[..., c])
        out.append(_assemble(vec_space.dof_map, scalar_space.dof_map, local,
                             (vec_space.dof_count, scalar_space.dof_count)))
    return tuple(out)


def rot_coupling(pressure_space: FESpace, vec_space: FESpace, quad=DEGREE4):
    """``R = [Rx, Ry]`` with ``(q_i, rot phi)``, rot phi = d_x phi_y - d_y phi_x."""
    mesh = _check_same_mesh(pressure_space, vec_space)
    area, glam = geometry(mesh)
    q = basis_values(pressure_space.kind, quad.points)               # (Q, nr)
    dphi = basis_gradients(vec_space.kind, quad.points, glam)        # (T, Q, nc, 2)
    shape = (pressure_space.dof_count, vec_space.dof_count)

    def block(component, sign):
        local = sign * 2.0 * area[:, None, None] * np.einsum(
            "q,qi,tqj->tij", quad.weights, q, dphi[..., component])
        return _assemble(pressure_space.dof_map, vec_space.dof_map, local, shape)

    return block(1, -1.0), block(0, 1.0)


def integrals(space: FESpace, quad=DEGREE4):
    """Vector of basis integrals, ``c_i = int phi_i``."""
    area, _ = geometry(space.mesh)
    phi = basis_values(space.kind, quad.points)
    local = 2.0 * area[:, None] * (quad.weights @ phi)[None, :]
    return np.bincount(space.dof_map.ravel(), weights=local.ravel(),
                       minlength=space.dof_count)


@dataclass(frozen=True, eq=False)
class MixedSystem:
    """Assembled mixed operator on one mesh.

    ``blocks`` keeps K, M, L, R, G and the multiplier column ``c`` in the
    state they were used to build ``A`` (eliminated or not); the decomposed
    source solve reuses them.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    offsets: dict
    triple: str
    u_space: FESpace
    p_space: FESpace
    blocks: dict
    eliminated: bool = False
    free_u: np.ndarray = field(default=None, repr=False)

    @property
    def mesh(self) -> Triangulation:
        return self.u_space.mesh

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.u_space.dof_count

    @property
    def n_p(self) -> int:
        return self.p_space.dof_count

    def field_slice(self, name) -> slice:
        start = self.offsets[name]
        stop = {"u": "phi_x", "phi_x": "phi_y", "phi_y": "p", "p": "w",
                "w": "ell", "ell": None}[name]
        return slice(start, self.size if stop is None else self.offsets[stop])

    def split(self, x):
        """Views of a global vector as ``dict(u=..., phi=(2, n), p=..., w=..., ell=...)``."""
        x = np.asarray(x)
        return {
            "u": x[self.field_slice("u")],
            "phi": np.stack([x[self.field_slice("phi_x")], x[self.field_slice("phi_y")]]),
            "p": x[self.field_slice("p")],
            "w": x[self.field_slice("w")],
            "ell": x[self.field_slice("ell")],
        }

    def join(self, u, phi, p, w, ell=0.0):
        return np.concatenate([u, phi[0], phi[1], p, w, np.atleast_1d(ell)])

    def free_mask(self) -> np.ndarray:
        """Boolean mask of unconstrained global dofs."""
        fu = self.u_space.free_mask
        return np.concatenate([fu, fu, fu, np.ones(self.n_p, bool), fu, [True]])


def _offsets(n2, npres):
    names = FIELDS
    sizes = [n2, n2, n2, npres, n2, 1]
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return {k: int(v) for k, v in zip(names, starts)}


def _global(blocks):
    K, L, R, G, c, M = (blocks[k] for k in ("K", "L", "R", "G", "c", "M"))
    n2, npres = K.shape[0], R.shape[0]
    Dd = blocks.get("D", sp.csr_matrix((n2, n2)))
    Dv = blocks.get("DL", sp.csr_matrix((2 * n2, 2 * n2)))
    cc = sp.csr_matrix(c.reshape(-1, 1))
    Z = None
    A = sp.bmat([
        [Dd,   Z,      Z,      K,   Z],
        [Z,    L + Dv, R.T,    G,   Z],
        [Z,    R,      Z,      Z,   cc],
        [K,    G.T,    Z,      Dd,  Z],
        [Z,    Z,      cc.T,   Z,   sp.csr_matrix((1, 1))],
    ], format="csr")
    n = A.shape[0]
    B = sp.bmat([[M, sp.csr_matrix((n2, n - n2))],
                 [sp.csr_matrix((n - n2, n2)), sp.csr_matrix((n - n2, n - n2))]],
                format="csr")
    A.sort_indices()
    B.sort_indices()
    return A, B


def assemble_mixed(u_space: FESpace, phi_space: FESpace, p_space: FESpace,
                   w_space: FESpace, triple: str | None = None) -> MixedSystem:
    """Assemble a(.,.) and b(.,.) without boundary conditions applied.

    ``u_space``, ``phi_space`` (one scalar component) and ``w_space`` must be
    the same P2 space object; the pressure space is P0 (triple A) or P1
    (triple B).
    """
    _check_same_mesh(u_space, phi_space, p_space, w_space)
    if not (u_space is phi_space is w_space):
        raise InvalidArgumentError("u, phi and w must share one scalar space")
    if triple is None:
        triple = {v: k for k, v in TRIPLES.items()}.get(p_space.kind)
    if triple not in TRIPLES or TRIPLES[triple] != p_space.kind:
        raise InvalidArgumentError(f"pressure space {p_space.kind} does not match triple {triple!r}")
    K = stiffness_matrix(u_space)
    M = mass_matrix(u_space)
    Gx, Gy = gradient_coupling(phi_space, w_space)
    Rx, Ry = rot_coupling(p_space, phi_space)
    blocks = {
        "K": K,
        "M": M,
        "L": sp.block_diag([K, K], format="csr"),
        "G": sp.vstack([Gx, Gy], format="csr"),
        "R": sp.hstack([Rx, Ry], format="csr"),
        "c": integrals(p_space),
    }
    A, B = _global(blocks)
    return MixedSystem(A, B, _offsets(u_space.dof_count, p_space.dof_count), triple,
                       u_space, p_space, blocks, eliminated=False,
                       free_u=u_space.free_dofs)


def _zero_rows_cols(mat, row_keep, col_keep):
    return (sp.diags(row_keep.astype(float)) @ mat @ sp.diags(col_keep.astype(float))).tocsr()


def apply_dirichlet(system: MixedSystem) -> MixedSystem:
    """Symmetric elimination of the boundary dofs of u, phi and w.

    Constrained rows and columns are zeroed; ``A`` receives a unit diagonal at
    each constrained dof and ``B`` a zero one, so the eigenvalues attached to
    them are infinite.
    """
    if system.eliminated:
        return system
    fu = system.u_space.free_mask
    fv = np.concatenate([fu, fu])
    fp = np.ones(system.n_p, dtype=bool)
    b = system.blocks
    blocks = {
        "K": _zero_rows_cols(b["K"], fu, fu),
        "M": _zero_rows_cols(b["M"], fu, fu),
        "L": _zero_rows_cols(b["L"], fv, fv),
        "G": _zero_rows_cols(b["G"], fv, fu),
        "R": _zero_rows_cols(b["R"], fp, fv),
        "c": b["c"],
        "D": sp.diags((~fu).astype(float), format="csr"),
        "DL": sp.diags((~fv).astype(float), format="csr"),
    }
    for key in ("K", "M", "L", "G", "R"):
        blocks[key].eliminate_zeros()
    A, B = _global(blocks)
    return replace(system, A=A, B=B, blocks=blocks, eliminated=True)


def build_system(mesh: Triangulation, triple: str) -> MixedSystem:
    """Spaces for ``triple`` on ``mesh``, assembled and with boundary conditions applied."""
    if triple not in TRIPLES:
        raise InvalidArgumentError(f"unknown triple {triple!r}")
    v = build_space(mesh, "P2", "dirichlet")
    p = build_space(mesh, TRIPLES[triple], "zero_mean")
    return apply_dirichlet(assemble_mixed(v, v, p, v, triple))


def assemble_source_rhs(system: MixedSystem, f) -> np.ndarray:
    """Right-hand side with ``(f, v)`` in the v-tested block and zeros elsewhere.

    ``f`` is either a coefficient vector in the u-space or a callable
    ``f(x, y)`` integrated by quadrature.
    """
    space = system.u_space
    if callable(f):
        area, _ = geometry(space.mesh)
        quad = DEGREE4
        phi = basis_values(space.kind, quad.points)                    # (Q, n)
        verts = space.mesh.vertices[space.mesh.triangles]              # (T, 3, 2)
        xq = np.einsum("qa,tad->tqd", quad.points, verts)
        fq = np.broadcast_to(np.asarray(f(xq[..., 0], xq[..., 1]), float), xq.shape[:2])
        local = 2.0 * area[:, None] * np.einsum("q,tq,qi->ti", quad.weights, fq, phi)
        load = np.bincount(space.dof_map.ravel(), weights=local.ravel(),
                           minlength=space.dof_count)
    else:
        f = np.asarray(f, dtype=float)
        if f.shape != (space.dof_count,):
            raise InvalidArgumentError(
                f"source vector has length {f.shape}, expected {space.dof_count}")
        load = mass_matrix(space) @ f
    if system.eliminated:
        load = load * space.free_mask
    rhs = np.zeros(system.size)
    rhs[system.field_slice("u")] = load
    return rhs


def norm_gram(system: MixedSystem, multiplier_weight: float = 0.0) -> sp.csr_matrix:
    """Gram matrix of the product norm H1 x H1^2 x L2 x H1.

    The multiplier enters with weight ``multiplier_weight`` (dropped by default).
    """
    K, M = system.blocks["K"], system.blocks["M"]
    H1 = (K + M).tocsr()
    Mp = mass_matrix(system.p_space)
    return sp.block_diag([H1, H1, H1, Mp, H1, sp.csr_matrix([[multiplier_weight]])],
                           format="csr")


def write_coo(matrix, path) -> None:
    """Coordinate text dump: header ``n nnz`` then ``row col value`` lines."""
    coo = sp.coo_matrix(matrix)
    lines = [f"{coo.shape[0]} {coo.nnz}"]
    lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    Path(path).write_text("\n".join(lines) + "\n")
