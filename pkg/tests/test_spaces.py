import numpy as np
import pytest
import scipy.sparse as sp

from plate_eig.errors import InvalidPairError, OutOfDomainError, UnsupportedCombinationError
from plate_eig.assembly import DEGREE4
from plate_eig.mesh import make_lshape_mesh, make_mesh, refine_uniform
from plate_eig.spaces import (basis_values, build_prolongation, build_space, compose,
                              evaluate)


def test_p1_dirichlet_on_two_triangles(two_triangles):
    V = build_space(two_triangles, "P1", "dirichlet")
    assert V.dof_count == 4
    assert len(V.constrained_dofs) == 4


def test_p2_count_on_two_triangles(two_triangles):
    assert build_space(two_triangles, "P2").dof_count == 9


def test_p0_zero_mean_on_eight_triangles(two_triangles):
    V = build_space(refine_uniform(two_triangles), "P0", "zero_mean")
    assert V.dof_count == 8 and V.zero_mean


def test_unsupported_combinations(square2):
    with pytest.raises(UnsupportedCombinationError):
        build_space(square2, "P2", "zero_mean")
    with pytest.raises(UnsupportedCombinationError):
        build_space(square2, "P0", "dirichlet")


@pytest.mark.parametrize("kind", ["P0", "P1", "P2"])
def test_dof_map_covers_all_dofs(kind):
    V = build_space(make_lshape_mesh(4), kind)
    assert V.dof_map.max() < V.dof_count
    np.testing.assert_array_equal(np.unique(V.dof_map), np.arange(V.dof_count))


@pytest.mark.parametrize("kind", ["P1", "P2"])
def test_dirichlet_dofs_are_boundary_nodes(kind):
    V = build_space(make_lshape_mesh(4), kind, "dirichlet")
    x, y = V.nodes.T
    on = (np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1)
          | (np.isclose(x, 0.5) & (y >= 0.5 - 1e-14)) | (np.isclose(y, 0.5) & (x <= 0.5 + 1e-14)))
    np.testing.assert_array_equal(np.flatnonzero(on), V.constrained_dofs)


def test_deterministic_numbering(square2):
    a, b = build_space(square2, "P2"), build_space(square2, "P2")
    np.testing.assert_array_equal(a.dof_map, b.dof_map)


@pytest.mark.parametrize("kind", ["P1", "P2"])
def test_partition_of_unity(kind):
    vals = basis_values(kind, DEGREE4.points)
    np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-14)


def _pair(kind, constraint="none", domain="square"):
    coarse = make_mesh(domain, 2)
    fine = refine_uniform(coarse)
    return build_space(coarse, kind, constraint), build_space(fine, kind, constraint)


def test_p1_hat_midpoints_average():
    Vc, Vf = _pair("P1")
    P = build_prolongation(Vc, Vf).matrix
    c = np.zeros(Vc.dof_count)
    c[7] = 1.0
    f = P @ c
    mesh_c = Vc.mesh
    nv = mesh_c.n_vertices
    np.testing.assert_array_equal(f[:nv], c)
    np.testing.assert_allclose(f[nv:], c[mesh_c.edges].mean(axis=1))
    assert np.diff(P.indptr).max() <= 2


def test_p2_reproduces_quadratic(rng):
    Vc, Vf = _pair("P2", domain="lshape")
    f = lambda x, y: x ** 2 - 0.5 * x * y + 2 * y  # noqa: E731
    fine = build_prolongation(Vc, Vf).matrix @ Vc.interpolate(f)
    centroids = Vf.mesh.vertices[Vf.mesh.triangles].mean(axis=1)
    pts = centroids[rng.choice(len(centroids), 10, replace=False)]
    pts = pts + 1e-3 * rng.standard_normal(pts.shape)
    for p in pts:
        assert evaluate(Vf, fine, p) == pytest.approx(f(*p), abs=1e-13)


def test_p2_single_basis_function_is_exact(rng):
    Vc, Vf = _pair("P2")
    P = build_prolongation(Vc, Vf).matrix
    for j in (3, Vc.mesh.n_vertices + 5):
        c = np.zeros(Vc.dof_count)
        c[j] = 1.0
        f = P @ c
        for p in rng.uniform(0.02, 0.98, size=(10, 2)):
            assert evaluate(Vf, f, p) == pytest.approx(evaluate(Vc, c, p), abs=1e-13)


def test_p2_row_pattern():
    Vc, Vf = _pair("P2")
    counts = np.diff(build_prolongation(Vc, Vf).matrix.indptr)
    mesh_c = Vc.mesh
    nv = mesh_c.n_vertices
    # fine nodes on coarse vertices or coarse edges: at most 3 coarse functions
    on_coarse_mask = np.zeros(Vf.dof_count, bool)
    on_coarse_mask[:nv + mesh_c.n_edges] = True
    assert counts[on_coarse_mask].max() <= 3
    # fine-edge midpoints strictly inside a coarse triangle need the full quadratic stencil
    assert counts.max() <= 6


def test_p0_is_parent_injection():
    Vc, Vf = _pair("P0", "zero_mean")
    P = build_prolongation(Vc, Vf).matrix
    assert set(np.unique(P.data)) == {1.0}
    np.testing.assert_array_equal(np.asarray(P.sum(axis=1)).ravel(), 1.0)
    np.testing.assert_array_equal(P.indices, Vf.mesh.parent_triangle)


def test_zero_mean_preserved(rng):
    for kind in ("P0", "P1"):
        from plate_eig.assembly import integrals
        Vc, Vf = _pair(kind, "zero_mean")
        ic, jf = integrals(Vc), integrals(Vf)
        c = rng.standard_normal(Vc.dof_count)
        c -= (ic @ c) / ic.sum()
        assert jf @ (build_prolongation(Vc, Vf).matrix @ c) == pytest.approx(0.0, abs=1e-14)


def test_dirichlet_maps_to_dirichlet():
    for kind in ("P1", "P2"):
        Vc, Vf = _pair(kind, "dirichlet")
        P = build_prolongation(Vc, Vf).matrix.tocsc()
        for j in Vc.constrained_dofs:
            rows = P.indices[P.indptr[j]:P.indptr[j + 1]]
            assert Vf.free_mask[rows].sum() == 0
        # free coarse functions vanish at fine boundary nodes
        assert abs(P[Vf.constrained_dofs]).sum() == 0


def test_prolongation_composes(rng):
    m0 = make_mesh("lshape", 2)
    m1 = refine_uniform(m0)
    m2 = refine_uniform(m1)
    for kind in ("P0", "P1", "P2"):
        V0, V1, V2 = (build_space(m, kind) for m in (m0, m1, m2))
        p01, p12 = build_prolongation(V0, V1), build_prolongation(V1, V2)
        x = rng.standard_normal(V0.dof_count)
        np.testing.assert_allclose(compose(p01, p12) @ x, p12 @ (p01 @ x), atol=1e-13)
        assert sp.issparse(compose(p01, p12))


def test_invalid_pairs(square2):
    fine = refine_uniform(square2)
    with pytest.raises(InvalidPairError):
        build_prolongation(build_space(square2, "P1"), build_space(fine, "P2"))
    with pytest.raises(InvalidPairError):
        build_prolongation(build_space(square2, "P1"), build_space(refine_uniform(fine), "P1"))
    with pytest.raises(InvalidPairError):
        build_prolongation(build_space(square2, "P1"), build_space(fine, "P1", "dirichlet"))


def test_evaluate_constant_and_xy(square2, rng):
    V1 = build_space(square2, "P1")
    V2 = build_space(square2, "P2")
    c2 = V2.interpolate(lambda x, y: x * y)
    for p in rng.uniform(0, 1, size=(5, 2)):
        assert evaluate(V1, np.ones(V1.dof_count), p) == pytest.approx(1.0, abs=1e-14)
        assert evaluate(V2, c2, p) == pytest.approx(p[0] * p[1], abs=1e-13)


def test_evaluate_p0_and_outside():
    mesh = make_lshape_mesh(2)
    V0 = build_space(mesh, "P0")
    c = np.arange(V0.dof_count, dtype=float)
    centroid = mesh.vertices[mesh.triangles[3]].mean(axis=0)
    assert evaluate(V0, c, centroid) == 3.0
    with pytest.raises(OutOfDomainError):
        evaluate(V0, c, (0.25, 0.75))
