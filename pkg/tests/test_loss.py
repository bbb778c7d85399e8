import math

import numpy as np
import pytest
import scipy.sparse as sp
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_difference_error, random_rotation
from l2m import shapes
from l2m.laplacian import AdjacencyData, vertex_adjacency
from l2m.loss import LossConfig, adjacency_loss, combined_loss, cross_entropy, edge_weights, mean_edge_length
from l2m.mesh import Mesh, build_topology, normalize_to_unit_cube


def dense_adjacency_loss(P, y, V, A, sigma, squared=False):
    """Direct n x n evaluation: Y, Psi, Omega, Theta, then the 1-ring average."""
    n = len(V)
    Y = P[np.arange(n), y]
    psi = np.abs(Y[:, None] - Y[None, :])
    dist = np.sqrt(((V[:, None, :] - V[None, :, :]) ** 2).sum(-1))
    omega = np.exp(-dist**2 / (2 * sigma**2)) if squared else np.exp(-dist / (2 * sigma))
    theta = (omega * psi * A).sum(axis=1)
    phi = A.sum(axis=1)
    keep = phi > 0
    return (theta[keep] / phi[keep]).sum() / keep.sum()


def random_case(seed, n_classes=3):
    rng = np.random.default_rng(seed)
    base = [shapes.icosphere(1), shapes.grid(3), shapes.torus(nu=6, nv=4), shapes.nonmanifold_book()][seed % 4]
    V = normalize_to_unit_cube(base).vertices + rng.normal(scale=0.01, size=base.vertices.shape)
    faces = base.faces
    # sometimes leave a vertex without faces
    if seed % 3 == 0:
        V = np.vstack([V, rng.normal(size=(1, 3))])
    mesh = Mesh(V, faces)
    adj = vertex_adjacency(build_topology(mesh))
    logits = rng.normal(scale=2, size=(mesh.n_vertices, n_classes))
    y = rng.integers(0, n_classes, mesh.n_vertices)
    return mesh, adj, logits, y


def softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def pair():
    A = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=bool))
    return AdjacencyData(A, np.array([1, 1]), np.array([[0, 1]])), np.array([[0, 0, 0], [1.0, 0, 0]])


class TestCrossEntropy:
    def test_uniform(self):
        P = torch.full((5, 4), 0.25, dtype=torch.float64)
        assert math.isclose(cross_entropy(P, [0, 1, 2, 3, 0]).item(), math.log(4), rel_tol=1e-12)

    def test_one_hot_clamped(self):
        P = torch.eye(3, dtype=torch.float64)
        assert 0 < cross_entropy(P, [0, 1, 2]).item() < 2e-7

    def test_label_range(self):
        with pytest.raises(ValueError):
            cross_entropy(torch.full((2, 2), 0.5), [0, 2])
        with pytest.raises(ValueError):
            cross_entropy(torch.full((2, 2), 0.5), [-1, 0])

    def test_gradient(self):
        _, _, logits, y = random_case(1)
        err = finite_difference_error(lambda z: cross_entropy(torch.softmax(z, -1), y),
                                      [torch.tensor(logits[:20])])
        assert err < 1e-5


class TestAdjacencyLoss:
    def test_two_vertex_example(self):
        adj, V = pair()
        P = torch.tensor([[1.0, 0.0], [0.5, 0.5]], dtype=torch.float64)
        out = adjacency_loss(P, [0, 0], V, adj, sigma=0.5).item()
        assert math.isclose(out, 0.5 * math.exp(-1), rel_tol=1e-12)
        assert math.isclose(out, 0.183940, abs_tol=1e-6)

    def test_constant_prediction_is_zero(self):
        mesh, adj, _, _ = random_case(2)
        P = torch.full((mesh.n_vertices, 3), 1 / 3, dtype=torch.float64)
        assert adjacency_loss(P, np.zeros(mesh.n_vertices, int), mesh.vertices, adj, 0.1).item() == 0.0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), sigma=st.floats(0.01, 2.0), squared=st.booleans())
    def test_matches_dense_oracle(self, seed, sigma, squared):
        mesh, adj, logits, y = random_case(seed)
        assert mesh.n_vertices <= 50
        P = softmax(logits)
        sparse = adjacency_loss(torch.tensor(P), y, mesh.vertices, adj, sigma, squared).item()
        dense = dense_adjacency_loss(P, y, mesh.vertices, adj.A.toarray().astype(float), sigma, squared)
        assert abs(sparse - dense) <= 1e-12

    def test_isolated_vertex_excluded(self):
        mesh, adj, logits, y = random_case(3)
        assert adj.phi[-1] == 0
        P = softmax(logits)
        keep = adj.phi > 0
        n_kept = keep.sum()
        full = adjacency_loss(torch.tensor(P), y, mesh.vertices, adj, 0.2).item()
        # changing the isolated vertex's prediction has no effect
        P2 = P.copy()
        P2[-1] = [1, 0, 0]
        assert full == adjacency_loss(torch.tensor(P2), y, mesh.vertices, adj, 0.2).item()
        assert n_kept == mesh.n_vertices - 1

    def test_nonnegative_and_zero_iff_constant_per_component(self, rng):
        from conftest import two_tetrahedra
        mesh = two_tetrahedra()
        adj = vertex_adjacency(build_topology(mesh))
        y = np.zeros(8, int)
        P = np.zeros((8, 2))
        P[:4, 0], P[4:, 0] = 0.3, 0.9
        P[:, 1] = 1 - P[:, 0]
        assert adjacency_loss(torch.tensor(P), y, mesh.vertices, adj, 0.5).item() == 0.0
        P[0] = [0.31, 0.69]
        assert adjacency_loss(torch.tensor(P), y, mesh.vertices, adj, 0.5).item() > 0

    def test_rigid_motion_invariant(self, rng):
        mesh, adj, logits, y = random_case(5)
        P = torch.tensor(softmax(logits))
        R = random_rotation(rng)
        a = adjacency_loss(P, y, mesh.vertices, adj, 0.3).item()
        b = adjacency_loss(P, y, mesh.vertices @ R.T + 4.0, adj, 0.3).item()
        assert math.isclose(a, b, rel_tol=1e-12)

    def test_sigma_monotone(self):
        mesh, adj, logits, y = random_case(6)
        P = torch.tensor(softmax(logits))
        vals = [adjacency_loss(P, y, mesh.vertices, adj, s).item() for s in (0.01, 0.05, 0.2, 1.0, 5.0)]
        assert np.all(np.diff(vals) >= 0)
        w1 = edge_weights(mesh.vertices, adj.edges, 0.1)
        w2 = edge_weights(mesh.vertices, adj.edges, 0.2)
        assert np.all(w2 >= w1)

    def test_bad_sigma(self):
        adj, V = pair()
        P = torch.full((2, 2), 0.5, dtype=torch.float64)
        with pytest.raises(ValueError):
            adjacency_loss(P, [0, 0], V, adj, 0.0)
        with pytest.raises(ValueError):
            LossConfig(sigma=-1.0)
        with pytest.raises(ValueError):
            LossConfig(omega=-0.1)

    def test_gradient(self):
        mesh, adj, logits, y = random_case(7)
        err = finite_difference_error(
            lambda z: adjacency_loss(torch.softmax(z, -1), y, mesh.vertices, adj, 0.2), [torch.tensor(logits)])
        assert err < 1e-5


class TestCombined:
    def test_omega_zero_is_cross_entropy(self):
        mesh, adj, logits, y = random_case(8)
        P = torch.softmax(torch.tensor(logits), -1)
        ce = cross_entropy(P, y)
        out = combined_loss(P, y, mesh.vertices, adj, LossConfig(omega=0.0))
        assert torch.equal(out, ce)

    def test_omega_one_exceeds_components(self):
        mesh, adj, logits, y = random_case(9)
        P = torch.softmax(torch.tensor(logits), -1)
        sigma = mean_edge_length(mesh.vertices, adj.edges)
        ce = cross_entropy(P, y).item()
        ad = adjacency_loss(P, y, mesh.vertices, adj, sigma).item()
        out = combined_loss(P, y, mesh.vertices, adj, LossConfig(omega=1.0)).item()
        assert ce > 0 and ad > 0 and out > ce and out > ad
        assert math.isclose(out, ce + ad, rel_tol=1e-14)

    def test_default_sigma_is_mean_edge_length(self):
        adj, V = pair()
        assert mean_edge_length(V, adj.edges) == 1.0

    def test_gradient(self):
        mesh, adj, logits, y = random_case(10)
        cfg = LossConfig(omega=1.0)
        err = finite_difference_error(
            lambda z: combined_loss(torch.softmax(z, -1), y, mesh.vertices, adj, cfg), [torch.tensor(logits)])
        assert err < 1e-5
