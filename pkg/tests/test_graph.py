import numpy as np
import pytest
from hypothesis import given, strategies as st

from otng.errors import DisconnectedGraph, GraphError
from otng.graph import (WeightedGraph, div_G, gamma_one, grad_G, incidence_matrix, laplacian,
                        laplacian_matrix, load_graph, pairing_p, save_graph)
from otng.models import path_graph, square_graph


def two_node(w=1.0):
    return WeightedGraph(2, [(0, 1, w)])


def random_graph(rng, n):
    edges = [(i, i + 1, rng.uniform(0.1, 5)) for i in range(n - 1)]
    for i in range(n):
        for j in range(i + 2, n):
            if rng.random() < 0.3:
                edges.append((i, j, rng.uniform(0.1, 5)))
    return WeightedGraph(n, edges)


class TestWeightedGraph:
    def test_rejects_bad_input(self):
        with pytest.raises(GraphError):
            WeightedGraph(2, [(0, 0, 1.0)])
        with pytest.raises(GraphError):
            WeightedGraph(2, [(0, 1, -1.0)])
        with pytest.raises(GraphError):
            WeightedGraph(2, [(0, 1, 1.0), (1, 0, 2.0)])
        with pytest.raises(GraphError):
            WeightedGraph(2, [(0, 2, 1.0)])
        with pytest.raises(DisconnectedGraph):
            WeightedGraph(3, [(0, 1, 1.0)])

    def test_json_round_trip(self, tmp_path):
        g = square_graph(1.0, 0.1, 2.0, 3.0)
        save_graph(g, tmp_path / "g.json")
        assert load_graph(tmp_path / "g.json") == g
        assert WeightedGraph.loads(g.dumps()) == g

    def test_shortest_paths_use_inverse_sqrt_weight(self):
        g = path_graph(3, [4.0, 1.0])
        assert g.shortest_paths[0, 2] == pytest.approx(0.5 + 1.0)


class TestIncidence:
    def test_two_node(self):
        D = incidence_matrix(two_node())
        assert np.allclose(np.abs(D), [[1, 1]])
        assert np.allclose(D.T @ D, [[1, -1], [-1, 1]])

    def test_path_orientation(self):
        D = incidence_matrix(path_graph(3))
        # edge (1, 0): +1 at the larger index
        assert np.allclose(D[0], [-1, 1, 0])
        assert np.allclose(D[1], [0, -1, 1])

    def test_laplacian_factorization(self, rng):
        g = random_graph(rng, 6)
        a = rng.dirichlet(np.ones(6))
        D = incidence_matrix(g)
        lam = np.array([(a[i] + a[j]) / 2 for i, j, _ in g.edges])
        assert np.allclose(D.T @ np.diag(lam) @ D, laplacian_matrix(g, a), atol=1e-14)


class TestLaplacian:
    def test_square_uniform(self):
        L = laplacian(square_graph(), np.full(4, 0.25)).matrix
        ref = 0.25 * np.array([[2, -1, -1, 0], [-1, 2, 0, -1], [-1, 0, 2, -1], [0, -1, -1, 2]])
        assert np.allclose(L, ref, atol=1e-15)

    def test_two_node_spectrum(self):
        S = laplacian(two_node(), np.array([0.5, 0.5]))
        assert np.allclose(S.matrix, 0.5 * np.array([[1, -1], [-1, 1]]))
        assert S.lambda1 == pytest.approx(1.0)
        assert np.allclose(S.pinv, 0.5 * np.array([[1, -1], [-1, 1]]))

    def test_pseudo_inverse_identities(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 9))
            g = random_graph(rng, n)
            S = laplacian(g, rng.dirichlet(np.ones(n)))
            L, K = S.matrix, S.pinv
            scale = np.abs(L).max()
            assert np.abs(L @ np.ones(n)).max() <= 1e-14 * scale * n
            assert S.eigenvalues[0] >= -S.tol
            assert (S.eigenvalues < S.tol).sum() == 1
            assert np.abs(L @ K @ L - L).max() <= 1e-10 * scale
            assert np.abs(K @ L @ K - K).max() <= 1e-10 * np.abs(K).max()
            P = np.eye(n) - np.ones((n, n)) / n
            assert np.abs(K @ L - P).max() <= 1e-10

    def test_zero_weights_detected(self):
        g = path_graph(3)
        S = laplacian(g, np.array([1.0, 0.0, 0.0]))
        assert S.rank == 1
        with pytest.raises(ValueError):
            laplacian(g, np.array([1.0, -0.1, 0.1]))


class TestCalculus:
    def test_grad_examples(self):
        g = path_graph(3)
        v = grad_G(g, np.array([2.0, 1.0, 0.0]))
        assert v[1, 0] == pytest.approx(-1.0) and v[0, 1] == pytest.approx(1.0)
        assert v[2, 1] == pytest.approx(-1.0) and v[1, 2] == pytest.approx(1.0)
        assert v[0, 2] == 0.0
        assert np.allclose(grad_G(g, np.ones(3)).values, 0)
        w = grad_G(two_node(), np.array([1.0, 0.0]))
        assert w[0, 1] == pytest.approx(1.0)
        assert np.allclose(w.matrix(), -w.matrix().T)

    def test_div_examples(self):
        g = two_node()
        p = np.array([0.5, 0.5])
        assert np.allclose(div_G(g, p, np.array([1.0, 0.0])), [0.5, -0.5])
        assert np.allclose(div_G(g, p, np.ones(2)), 0)

    def test_gamma_examples(self):
        g = two_node()
        assert np.allclose(gamma_one(g, [1.0, 0.0], [1.0, 0.0]), [0.5, 0.5])
        assert np.allclose(gamma_one(g, [1.0, 0.0], [3.0, 3.0]), 0)

    def test_pairing_example(self):
        assert pairing_p(two_node(), [0.5, 0.5], [1.0, 0.0], [1.0, 0.0]) == pytest.approx(0.5)

    @given(st.integers(0, 2 ** 31), st.integers(2, 8))
    def test_calculus_identities(self, seed, n):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, n)
        p = rng.dirichlet(np.ones(n))
        phi, psi = rng.standard_normal(n), rng.standard_normal(n)
        L = laplacian_matrix(g, p)
        assert np.allclose(div_G(g, p, phi), L @ phi, atol=1e-12)
        assert abs(div_G(g, p, phi).sum()) <= 1e-12
        gp = gamma_one(g, phi, psi)
        three = [pairing_p(g, p, phi, psi), phi @ L @ psi, gp @ p]
        assert np.allclose(three, three[0], atol=1e-12)
        assert np.allclose(gp, gamma_one(g, psi, phi))
        assert np.allclose(gamma_one(g, 2 * phi, psi), 2 * gp)
        gaa, gbb = gamma_one(g, phi, phi), gamma_one(g, psi, psi)
        assert np.all(gaa >= 0)
        assert np.all(gp ** 2 <= gaa * gbb + 1e-12)

    @given(st.integers(0, 2 ** 31), st.integers(2, 7))
    def test_energy_derivative_is_gamma(self, seed, n):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, n)
        phi = rng.standard_normal(n)
        a = rng.dirichlet(np.ones(n))
        # phi^T L(a) phi is linear in a with coefficients Gamma(phi, phi)
        grads = [phi @ laplacian_matrix(g, e) @ phi for e in np.eye(n)]
        assert np.allclose(grads, gamma_one(g, phi, phi), atol=1e-12)
        assert phi @ laplacian_matrix(g, a) @ phi == pytest.approx(gamma_one(g, phi, phi) @ a)
