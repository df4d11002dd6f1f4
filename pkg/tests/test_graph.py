"""Trade graph construction, weights, and connectivity."""

import numpy as np
import pytest

from p2pmarket.errors import DisconnectedError, EmptySideError, NotConnectedError
from p2pmarket.graph import (
    Role,
    TradeGraph,
    assert_valid,
    build_bipartite,
    is_connected,
    metropolis_weights,
)


def make_graph(n, sellers, buyers, edges):
    return TradeGraph(n, tuple(sellers), tuple(buyers), frozenset(edges), np.eye(n))


class TestBuildBipartite:
    def test_single_pair(self):
        g = build_bipartite([0], [1])
        assert g.edges == frozenset({(0, 1)})
        assert g.n == 2

    def test_complete_k23(self):
        g = build_bipartite([0, 1], [2, 3, 4])
        assert len(g.edges) == 6
        assert is_connected(g)

    def test_case_study_scale(self):
        # complete bipartite between 25 sellers and 30 buyers
        g = build_bipartite(list(range(25)), list(range(25, 55)))
        assert len(g.edges) == 25 * 30
        assert is_connected(g)

    def test_weights_identity_placeholder(self):
        g = build_bipartite([0], [1])
        assert np.array_equal(g.weights, np.eye(2))

    def test_empty_side(self):
        with pytest.raises(EmptySideError):
            build_bipartite([], [0])
        with pytest.raises(EmptySideError):
            build_bipartite([0], [])

    def test_overlapping_sides_rejected(self):
        with pytest.raises(ValueError):
            build_bipartite([0, 1], [1, 2])

    def test_random_topology_connected(self):
        for seed in range(20):
            g = build_bipartite(list(range(4)), list(range(4, 10)), "random",
                                target_degree=2.5, seed=seed)
            assert is_connected(g)
            # spanning tree has n-1 edges; fill should reach the target
            assert len(g.edges) >= g.n - 1

    def test_random_topology_needs_degree(self):
        with pytest.raises(ValueError):
            build_bipartite([0], [1], "random")

    def test_random_topology_deterministic(self):
        g1 = build_bipartite([0, 1, 2], [3, 4, 5], "random", target_degree=2, seed=7)
        g2 = build_bipartite([0, 1, 2], [3, 4, 5], "random", target_degree=2, seed=7)
        assert g1.edges == g2.edges

    def test_role_of(self):
        g = build_bipartite([0, 1], [2])
        assert g.role_of(0) is Role.SELLER
        assert g.role_of(2) is Role.BUYER


class TestIsConnected:
    def test_k23_connected(self):
        assert is_connected(build_bipartite([0, 1], [2, 3, 4]))

    def test_two_disjoint_edges(self):
        g = make_graph(4, [0, 1], [2, 3], [(0, 2), (1, 3)])
        assert not is_connected(g)

    def test_singleton(self):
        g = TradeGraph(1, (0,), (), frozenset(), np.eye(1))
        assert is_connected(g)


class TestMetropolisWeights:
    def test_path_graph_hand_evaluated(self):
        # path 0-1-2 with degrees 1,2,1: every edge weight 1/(1+2) = 1/3,
        # diagonals 1 - (row sums) = (2/3, 1/3, 2/3)
        g = make_graph(3, [1], [0, 2], [(0, 1), (1, 2)])
        w = metropolis_weights(g).weights
        expected = np.array(
            [[2 / 3, 1 / 3, 0.0], [1 / 3, 1 / 3, 1 / 3], [0.0, 1 / 3, 2 / 3]]
        )
        np.testing.assert_allclose(w, expected, atol=1e-15)

    def test_k11(self):
        w = metropolis_weights(build_bipartite([0], [1])).weights
        np.testing.assert_allclose(w, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_doubly_stochastic(self):
        g = metropolis_weights(build_bipartite(list(range(5)), list(range(5, 12))))
        assert np.max(np.abs(g.weights.sum(axis=0) - 1)) < 1e-12
        assert np.max(np.abs(g.weights.sum(axis=1) - 1)) < 1e-12
        assert_valid(g)

    def test_not_connected(self):
        g = make_graph(4, [0, 1], [2, 3], [(0, 2)])
        with pytest.raises(NotConnectedError):
            metropolis_weights(g)

    def test_immutable_weights(self):
        g = metropolis_weights(build_bipartite([0], [1]))
        with pytest.raises(ValueError):
            g.weights[0, 0] = 2.0


class TestInvariants:
    def test_metropolis_always_doubly_stochastic(self):
        # random connected bipartite graphs up to n = 100, 1000 trials
        rng = np.random.default_rng(0)
        for trial in range(1000):
            ns = int(rng.integers(1, 51))
            nb = int(rng.integers(1, 50))
            deg = float(rng.uniform(1.0, 6.0))
            g = build_bipartite(
                list(range(ns)), list(range(ns, ns + nb)), "random",
                target_degree=deg, seed=trial,
            )
            w = metropolis_weights(g).weights
            assert np.max(np.abs(w.sum(axis=0) - 1)) < 1e-12
            assert np.max(np.abs(w.sum(axis=1) - 1)) < 1e-12
            assert np.array_equal(w, w.T)

    def test_spectral_gap(self):
        # consensus converges iff the second-largest eigenvalue magnitude
        # is below one; check numerically on small connected graphs
        rng = np.random.default_rng(1)
        for trial in range(50):
            ns = int(rng.integers(1, 11))
            nb = int(rng.integers(1, 10))
            if ns + nb > 20:
                continue
            g = build_bipartite(
                list(range(ns)), list(range(ns, ns + nb)), "random",
                target_degree=2.0, seed=trial,
            )
            w = metropolis_weights(g).weights
            eig = np.sort(np.abs(np.linalg.eigvalsh(w)))
            assert eig[-1] == pytest.approx(1.0, abs=1e-9)
            if g.n > 1:
                assert eig[-2] < 1.0 - 1e-12
