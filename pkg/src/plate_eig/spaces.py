"""Scalar Lagrange spaces P0/P1/P2 and nested-mesh prolongation.

Dof numbering: P1 dofs are the mesh vertices; P2 dofs are the vertices
followed by the edge midpoints in the mesh's canonical edge order; P0 dofs
are the triangles.  The local P2 ordering is three vertex functions followed
by three edge functions, edge ``j`` being opposite local vertex ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (InvalidArgumentError, InvalidPairError, OutOfDomainError,
                     UnsupportedCombinationError)
from .mesh import CHILD_BARYCENTRIC, LOCAL_EDGES, Triangulation

KINDS = ("P0", "P1", "P2")
CONSTRAINTS = ("none", "dirichlet", "zero_mean")
N_LOCAL = {"P0": 1, "P1": 3, "P2": 6}


# -- reference basis, written in barycentric coordinates --------------------

def basis_values(kind, bary):
    """Basis values at barycentric points ``bary`` (..., 3) -> (..., nloc)."""
    bary = np.asarray(bary, dtype=float)
    if kind == "P0":
        return np.ones(bary.shape[:-1] + (1,))
    if kind == "P1":
        return bary.copy()
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    vert = bary * (2.0 * bary - 1.0)
    edge = 4.0 * bary[..., a] * bary[..., b]
    return np.concatenate([vert, edge], axis=-1)


def basis_gradients(kind, bary, grad_lambda):
    """Physical gradients.

    ``bary`` is (Q, 3) and ``grad_lambda`` is (T, 3, 2); returns (T, Q, nloc, 2).
    """
    bary = np.asarray(bary, dtype=float)
    nt, nq = grad_lambda.shape[0], bary.shape[0]
    if kind == "P0":
        return np.zeros((nt, nq, 1, 2))
    g = grad_lambda[:, None, :, :]                        # (T, 1, 3, 2)
    if kind == "P1":
        return np.broadcast_to(g, (nt, nq, 3, 2)).copy()
    lam = bary[None, :, :, None]                          # (1, Q, 3, 1)
    vert = (4.0 * lam - 1.0) * g
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    edge = 4.0 * (lam[:, :, b] * g[:, :, a] + lam[:, :, a] * g[:, :, b])
    return np.concatenate([vert, edge], axis=2)


def local_nodes(kind):
    """Barycentric coordinates of the local nodes."""
    if kind == "P0":
        return np.full((1, 3), 1.0 / 3.0)
    eye = np.eye(3)
    if kind == "P1":
        return eye
    mids = 0.5 * (eye[LOCAL_EDGES[:, 0]] + eye[LOCAL_EDGES[:, 1]])
    return np.vstack([eye, mids])


# -- spaces -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FESpace:
    mesh: Triangulation
    kind: str
    constraint: str
    dof_count: int
    dof_map: np.ndarray           # (T, nloc)
    nodes: np.ndarray             # (dof_count, 2)
    constrained_dofs: np.ndarray  # sorted int array

    @property
    def zero_mean(self) -> bool:
        return self.constraint == "zero_mean"

    @property
    def n_local(self) -> int:
        return N_LOCAL[self.kind]

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.dof_count, dtype=bool)
        mask[self.constrained_dofs] = False
        return mask

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.free_mask)

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant (cell averages at centroids for P0) of ``f(x, y)``."""
        vals = np.asarray(f(self.nodes[:, 0], self.nodes[:, 1]), dtype=float)
        return np.broadcast_to(vals, (self.dof_count,)).copy()


def build_space(mesh: Triangulation, kind: str, constraint: str = "none") -> FESpace:
    if kind not in KINDS:
        raise InvalidArgumentError(f"unknown element kind {kind!r}")
    if constraint not in CONSTRAINTS:
        raise InvalidArgumentError(f"unknown constraint {constraint!r}")
    if constraint == "zero_mean" and kind == "P2":
        raise UnsupportedCombinationError("zero_mean is only supported for P0 and P1")
    if constraint == "dirichlet" and kind == "P0":
        raise UnsupportedCombinationError("P0 has no boundary nodes")

    nv = mesh.n_vertices
    if kind == "P0":
        dof_map = np.arange(mesh.n_triangles)[:, None]
        nodes = mesh.vertices[mesh.triangles].mean(axis=1)
        boundary = np.empty(0, dtype=np.int64)
    elif kind == "P1":
        dof_map = mesh.triangles.copy()
        nodes = mesh.vertices
        boundary = mesh.boundary_vertices
    else:
        dof_map = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
        nodes = np.vstack([mesh.vertices, mesh.edge_midpoints])
        boundary = np.concatenate([mesh.boundary_vertices,
                                   nv + np.flatnonzero(mesh.boundary_edge_mask)])
    constrained = np.sort(boundary) if constraint == "dirichlet" else np.empty(0, np.int64)
    dof_map = np.ascontiguousarray(dof_map, dtype=np.int64)
    dof_map.setflags(write=False)
    return FESpace(mesh, kind, constraint, len(nodes), dof_map,
                   np.asarray(nodes, dtype=float), constrained.astype(np.int64))


# -- prolongation -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Prolongation:
    coarse: FESpace
    fine: FESpace
    matrix: sp.csr_matrix

    def __matmul__(self, x):
        return self.matrix @ x


def _child_nodes(kind):
    """Barycentric coords (w.r.t. parent) of each child's local nodes: (4, nloc, 3)."""
    ref = local_nodes(kind)                    # (nloc, 3) in the child
    return np.einsum("na,cab->cnb", ref, CHILD_BARYCENTRIC)


def build_prolongation(coarse: FESpace, fine: FESpace) -> Prolongation:
    """Exact embedding of the coarse space into the fine one, as a sparse matrix.

    For Dirichlet spaces the columns of constrained coarse dofs are empty, so
    boundary data never leaks into fine interior dofs.
    """
    if coarse.kind != fine.kind or coarse.constraint != fine.constraint:
        raise InvalidPairError("prolongation needs matching kind and constraint")
    if fine.mesh.parent is not coarse.mesh:
        raise InvalidPairError("fine mesh is not the uniform refinement of the coarse mesh")
    parent = fine.mesh.parent_triangle
    pos = fine.mesh.child_position
    values = basis_values(coarse.kind, _child_nodes(coarse.kind))   # (4, nloc_f, nloc_c)
    vals = values[pos]                                               # (T_f, nloc, nloc)
    rows = np.broadcast_to(fine.dof_map[:, :, None], vals.shape)
    cols = np.broadcast_to(coarse.dof_map[parent][:, None, :], vals.shape)
    rows, cols, vals = rows.ravel(), cols.ravel(), vals.ravel()
    keep = np.abs(vals) > 1e-15
    if coarse.constraint == "dirichlet":
        # the operator acts on functions vanishing on the boundary
        keep &= coarse.free_mask[cols]
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    # each (fine node, coarse function) pair shows up once per fine triangle
    # touching the node; values coincide, keep one
    key = rows * coarse.dof_count + cols
    _, first = np.unique(key, return_index=True)
    mat = sp.csr_matrix((vals[first], (rows[first], cols[first])),
                        shape=(fine.dof_count, coarse.dof_count))
    mat.sort_indices()
    return Prolongation(coarse, fine, mat)


def compose(*prolongations: Prolongation) -> sp.csr_matrix:
    """Matrix of ``p_last @ ... @ p_first`` (arguments given coarse to fine)."""
    out = prolongations[0].matrix
    for p in prolongations[1:]:
        out = p.matrix @ out
    return out.tocsr()


# -- evaluation -------------------------------------------------------------

def locate(mesh: Triangulation, point, tol=1e-12):
    """Index of a triangle containing ``point`` and the barycentric coordinates."""
    x = np.asarray(point, dtype=float)
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    r = x - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    bary = np.column_stack([1.0 - l1 - l2, l1, l2])
    inside = np.flatnonzero(bary.min(axis=1) >= -tol)
    if len(inside) == 0:
        raise OutOfDomainError(f"point {tuple(x)} lies outside the mesh")
    t = inside[0]
    return int(t), bary[t]


def evaluate(space: FESpace, coeffs, point) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.dof_count,):
        raise InvalidArgumentError("coefficient vector has the wrong length")
    t, bary = locate(space.mesh, point)
    phi = basis_values(space.kind, bary)
    return float(phi @ coeffs[space.dof_map[t]])
