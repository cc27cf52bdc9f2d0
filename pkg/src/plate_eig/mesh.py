"""Structured triangulations of the square and the L-shape, and red refinement.

Triangles are stored counterclockwise.  Local edge ``j`` of a triangle is the
edge opposite local vertex ``j``, i.e. the pairs ``(1, 2), (2, 0), (0, 1)``.
Edges are numbered globally in lexicographic order of ``(min vertex, max
vertex)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, NumericDegeneracyError

LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])

# Barycentric coordinates (w.r.t. the parent) of the vertices of the four
# children produced by :func:`refine_uniform`.
_V0, _V1, _V2 = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
_M0, _M1, _M2 = (0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)
CHILD_BARYCENTRIC = np.array([
    [_V0, _M2, _M1],
    [_M2, _V1, _M0],
    [_M1, _M0, _V2],
    [_M0, _M1, _M2],
])


@dataclass(frozen=True, eq=False)
class Triangulation:
    """An immutable conforming triangulation.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counterclockwise
    edges : (E, 2) int array, rows sorted, lexicographic order
    triangle_edges : (T, 3) int array, global id of local edge j
    boundary_edges : (B, 2) int array, subset of ``edges``
    level : refinement depth, 0 for an initial mesh
    parent_triangle : (T,) int array for level > 0, else None
    child_position : (T,) int array in 0..3 (row of ``CHILD_BARYCENTRIC``)
    parent : the coarser Triangulation this one was refined from
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    boundary_edges: np.ndarray
    boundary_edge_mask: np.ndarray
    level: int = 0
    parent_triangle: np.ndarray | None = None
    child_position: np.ndarray | None = None
    parent: "Triangulation | None" = field(default=None, repr=False)
    domain: str = "custom"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def mesh_size(self) -> float:
        """Longest edge."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d ** 2).sum(axis=1)).max())

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def is_refinement_of(self, other: "Triangulation") -> bool:
        return self.parent is other


def signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_structure(triangles):
    local = triangles[:, LOCAL_EDGES]                     # (T, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True,
                                       return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        raise InvalidArgumentError("non-manifold triangulation: an edge has >2 triangles")
    triangle_edges = inverse.reshape(-1, 3)
    boundary_mask = counts == 1
    return edges, triangle_edges, boundary_mask


def build_triangulation(vertices, triangles, *, level=0, parent_triangle=None,
                        child_position=None, parent=None, domain="custom"):
    """Validate raw arrays and derive edge/boundary data."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise InvalidArgumentError("triangles must be an (T, 3) array")
    if np.any(signed_areas(vertices, triangles) <= 0.0):
        raise NumericDegeneracyError("triangle with non-positive signed area")
    edges, triangle_edges, bmask = _edge_structure(triangles)
    for arr in (vertices, triangles, edges, triangle_edges, bmask):
        arr.setflags(write=False)
    return Triangulation(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        boundary_edges=edges[bmask],
        boundary_edge_mask=bmask,
        level=level,
        parent_triangle=parent_triangle,
        child_position=child_position,
        parent=parent,
        domain=domain,
    )


PATTERNS = ("crisscross", "diagonal")


def _grid_mesh(n0, keep_cell, domain, pattern="crisscross"):
    if pattern not in PATTERNS:
        raise InvalidArgumentError(f"unknown mesh pattern {pattern!r}")
    idx = lambda i, j: j * (n0 + 1) + i  # noqa: E731
    x, y = np.meshgrid(np.arange(n0 + 1) / n0, np.arange(n0 + 1) / n0)
    verts = [np.column_stack([x.ravel(), y.ravel()])]
    n_grid = (n0 + 1) ** 2
    centers = []
    tris = []
    for j in range(n0):
        for i in range(n0):
            if not keep_cell(i, j):
                continue
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if pattern == "diagonal":
                # diagonal from bottom-left to top-right
                tris += [(a, b, c), (a, c, d)]
            else:
                m = n_grid + len(centers)
                centers.append(((i + 0.5) / n0, (j + 0.5) / n0))
                tris += [(a, b, m), (b, c, m), (c, d, m), (d, a, m)]
    if centers:
        verts.append(np.array(centers))
    verts = np.vstack(verts)
    tris = np.array(tris, dtype=np.int64)
    used = np.unique(tris)
    renumber = -np.ones(len(verts), dtype=np.int64)
    renumber[used] = np.arange(len(used))
    return build_triangulation(verts[used], renumber[tris], domain=domain)


def _check_n0(n0, even=False):
    if isinstance(n0, bool) or int(n0) != n0 or n0 < 1 or (even and n0 % 2):
        kind = "positive even" if even else "positive"
        raise InvalidArgumentError(f"n0 must be a {kind} integer, got {n0!r}")
    return int(n0)


def make_unit_square_mesh(n0: int, pattern: str = "crisscross") -> Triangulation:
    """Triangulation of (0, 1)^2 with ``n0`` square cells per side.

    ``pattern="crisscross"`` splits every cell into four triangles through
    its center; ``"diagonal"`` cuts it along the bottom-left/top-right
    diagonal.
    """
    return _grid_mesh(_check_n0(n0), lambda i, j: True, "square", pattern)


def make_lshape_mesh(n0: int, pattern: str = "crisscross") -> Triangulation:
    """Triangulation of (0,1)^2 minus [0,1/2]x[1/2,1].

    ``n0`` is the number of cells per unit length and must be even so that the
    reentrant corner (1/2, 1/2) is a vertex.
    """
    n0 = _check_n0(n0, even=True)
    half = n0 // 2
    return _grid_mesh(n0, lambda i, j: not (i < half and j >= half), "lshape", pattern)


def make_mesh(domain: str, n0: int, pattern: str = "crisscross") -> Triangulation:
    if domain == "square":
        return make_unit_square_mesh(n0, pattern)
    if domain == "lshape":
        return make_lshape_mesh(n0, pattern)
    raise InvalidArgumentError(f"unknown domain {domain!r}")


def domain_area(domain: str) -> float:
    return {"square": 1.0, "lshape": 0.75}[domain]


def refine_uniform(mesh: Triangulation) -> Triangulation:
    """Red refinement: split every triangle into four through its edge midpoints.

    Coarse vertices keep their indices; the midpoint of coarse edge ``e`` gets
    index ``n_vertices + e``.  The children of coarse triangle ``t`` are
    ``4t, ..., 4t+3`` in the order of ``CHILD_BARYCENTRIC``.
    """
    nv = mesh.n_vertices
    t = mesh.triangles
    m = nv + mesh.triangle_edges           # m[:, j] = midpoint opposite vertex j
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m0, m1, m2 = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([
        np.column_stack([v0, m2, m1]),
        np.column_stack([m2, v1, m0]),
        np.column_stack([m1, m0, v2]),
        np.column_stack([m0, m1, m2]),
    ], axis=1).reshape(-1, 3)
    vertices = np.vstack([mesh.vertices, mesh.edge_midpoints])
    nt = mesh.n_triangles
    parent_triangle = np.repeat(np.arange(nt), 4)
    child_position = np.tile(np.arange(4), nt)
    parent_triangle.setflags(write=False)
    child_position.setflags(write=False)
    return build_triangulation(
        vertices, children, level=mesh.level + 1,
        parent_triangle=parent_triangle, child_position=child_position,
        parent=mesh, domain=mesh.domain,
    )


def refine_times(mesh: Triangulation, n: int) -> list[Triangulation]:
    """Return ``[mesh, refine(mesh), ..., refine^n(mesh)]``."""
    meshes = [mesh]
    for _ in range(n):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


def geometry(mesh: Triangulation):
    """Areas (T,) and barycentric gradients (T, 3, 2) of every triangle."""
    p = mesh.vertices[mesh.triangles]
    area = signed_areas(mesh.vertices, mesh.triangles)
    if np.any(area <= 0.0):
        raise NumericDegeneracyError("degenerate triangle in mesh")
    # grad(lambda_i) = rot90(opposite edge) / (2 area)
    e = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]          # edge opposite local vertex i
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    return area, grads


def triangle_geometry(mesh: Triangulation, t: int):
    """Signed area and the constant gradients of the 3 barycentric functions."""
    if not 0 <= t < mesh.n_triangles:
        raise InvalidArgumentError(f"triangle index {t} out of range")
    p = mesh.vertices[mesh.triangles[t]]
    d1, d2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    scale = max(np.abs(d1).max(), np.abs(d2).max(), np.finfo(float).tiny)
    if abs(area) <= 1e-14 * scale * scale:
        raise NumericDegeneracyError(f"triangle {t} is degenerate")
    e = p[[2, 0, 1]] - p[[1, 2, 0]]
    grads = np.column_stack([-e[:, 1], e[:, 0]]) / (2.0 * area)
    return area, grads


def euler_characteristic(mesh: Triangulation) -> int:
    return mesh.n_vertices - mesh.n_edges + mesh.n_triangles


def write_mesh(mesh: Triangulation, path) -> None:
    """Plain-text dump: ``V T`` header, then vertex lines, then triangle lines."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Triangulation:
    rows = Path(path).read_text().split("\n")
    nv, nt = map(int, rows[0].split())
    verts = np.array([list(map(float, r.split())) for r in rows[1:1 + nv]])
    tris = np.array([list(map(int, r.split())) for r in rows[1 + nv:1 + nv + nt]])
    return build_triangulation(verts, tris)
