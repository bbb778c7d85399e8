import numpy as np
import pytest
import scipy.linalg as sla

from conftest import three_fins, two_tetrahedra, two_triangles
from l2m import shapes
from l2m.laplacian import (
    COT_CLAMP, corner_cotangents, cotangent_laplacian, load_triplets, save_triplets, vertex_adjacency,
)
from l2m.mesh import Mesh, build_topology, normalize_to_unit_cube

MESHES = {
    "tetrahedron": shapes.tetrahedron,
    "icosphere2": lambda: shapes.icosphere(2),
    "torus": lambda: shapes.torus(nu=12, nv=8),
    "grid": lambda: shapes.grid(5),
    "book": shapes.nonmanifold_book,
    "fins": three_fins,
}


def dense_oracle(mesh):
    """Edge-by-edge weights from the angle itself, no vectorization."""
    n = mesh.n_vertices
    L = np.zeros((n, n))
    v = mesh.vertices
    for tri in mesh.faces:
        for c in range(3):
            a, i, j = tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]
            u, w = v[i] - v[a], v[j] - v[a]
            ang = np.arccos(np.clip(u @ w / np.linalg.norm(u) / np.linalg.norm(w), -1, 1))
            half = 0.5 / np.tan(ang)
            L[i, j] -= half
            L[j, i] -= half
    L[np.diag_indices(n)] = -L.sum(axis=1)
    return L


def test_equilateral_triangle():
    v = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
    L = cotangent_laplacian(Mesh(v, [[0, 1, 2]])).toarray()
    w = 1 / (2 * np.sqrt(3))
    np.testing.assert_allclose(L, [[2 * w, -w, -w], [-w, 2 * w, -w], [-w, -w, 2 * w]], atol=1e-12)
    assert np.isclose(L[0, 1], -0.288675, atol=1e-6) and np.isclose(L[0, 0], 0.577350, atol=1e-6)


def test_square_diagonal_weight_zero():
    L = cotangent_laplacian(two_triangles()).toarray()
    assert abs(L[0, 2]) < 1e-15
    np.testing.assert_allclose(L[0, 1], -0.5, atol=1e-15)


@pytest.mark.parametrize("name", list(MESHES))
def test_matches_dense_oracle(name):
    m = normalize_to_unit_cube(MESHES[name]())
    np.testing.assert_allclose(cotangent_laplacian(m).toarray(), dense_oracle(m), atol=1e-10)


@pytest.mark.parametrize("name", list(MESHES))
def test_symmetric_rows_sum_zero(name):
    m = normalize_to_unit_cube(MESHES[name]())
    L = cotangent_laplacian(m)
    assert abs(L - L.T).max() <= 1e-12
    assert np.abs(np.asarray(L.sum(axis=1))).max() <= 1e-9


@pytest.mark.parametrize("name", list(MESHES))
def test_psd_random_vectors(name, rng):
    m = normalize_to_unit_cube(MESHES[name]())
    L = cotangent_laplacian(m)
    X = rng.normal(size=(m.n_vertices, 100))
    q = np.einsum("ij,ij->j", X, L @ X)
    assert np.all(q >= -1e-9 * (X**2).sum(axis=0))


def test_constant_in_kernel():
    m = normalize_to_unit_cube(shapes.torus())
    L = cotangent_laplacian(m)
    assert np.linalg.norm(L @ np.ones(m.n_vertices)) <= 1e-9 * abs(L).max() * m.n_vertices


def test_kernel_dimension_two_components():
    L = cotangent_laplacian(two_tetrahedra()).toarray()
    ev = sla.eigvalsh(L)
    assert np.sum(np.abs(ev) < 1e-10) == 2


def test_nonmanifold_edge_accumulates_all_triangles():
    m = three_fins()
    L = cotangent_laplacian(m).toarray()
    cot = corner_cotangents(m.vertices, m.faces)
    expected = 0
    for f, tri in enumerate(m.faces):
        c = [k for k in range(3) if tri[k] not in (0, 1)][0]
        expected -= 0.5 * cot[f, c]
    assert np.isclose(L[0, 1], expected, atol=1e-14)


def test_degenerate_triangle_clamped():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0]], dtype=float)
    m = Mesh(v, [[0, 1, 2], [0, 3, 1]])
    cot = corner_cotangents(m.vertices, m.faces)
    assert np.all(np.abs(cot) <= COT_CLAMP)
    assert np.all(np.isfinite(cotangent_laplacian(m).data))


def test_triplet_round_trip(tmp_path):
    L = cotangent_laplacian(normalize_to_unit_cube(shapes.icosphere(1)))
    p = tmp_path / "L.txt"
    save_triplets(L, p)
    assert p.read_text().splitlines()[0] == f"{L.shape[0]} {L.nnz}"
    assert abs(load_triplets(p) - L).max() == 0


class TestAdjacency:
    def test_tetrahedron(self):
        adj = vertex_adjacency(build_topology(shapes.tetrahedron()))
        np.testing.assert_array_equal(adj.phi, [3, 3, 3, 3])

    def test_two_triangles(self):
        adj = vertex_adjacency(build_topology(two_triangles()))
        # vertices 0 and 2 are the shared ones
        np.testing.assert_array_equal(adj.phi, [3, 2, 3, 2])

    def test_isolated_vertex(self):
        v = np.vstack([two_triangles().vertices, [[5, 5, 5]]])
        adj = vertex_adjacency(build_topology(Mesh(v, two_triangles().faces)))
        assert adj.phi[4] == 0

    def test_structure(self):
        adj = vertex_adjacency(build_topology(shapes.nonmanifold_book()))
        A = adj.A.toarray()
        assert (A == A.T).all() and not A.diagonal().any()
        np.testing.assert_array_equal(adj.phi, A.sum(axis=1))
        assert np.all(adj.edges[:, 0] < adj.edges[:, 1])
