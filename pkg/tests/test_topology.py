import numpy as np
import pytest

from tierwalk import (
    DomainGraph,
    InitialDistribution,
    InvalidGraphError,
    PlacementVector,
    build_generator,
    miss_matrix,
    uniformize,
)

from oracles import random_walkable_graph


class TestDomainGraph:
    def test_rejects_out_degree_zero(self):
        with pytest.raises(InvalidGraphError, match="out-degree 0"):
            DomainGraph(2, ((0, 1),))

    def test_rejects_self_loop(self):
        with pytest.raises(InvalidGraphError, match="self-loop"):
            DomainGraph(2, ((0, 0), (0, 1), (1, 0)))

    def test_rejects_duplicate_edge(self):
        with pytest.raises(InvalidGraphError, match="duplicate"):
            DomainGraph(2, ((0, 1), (0, 1), (1, 0)))

    def test_rejects_dangling_edge(self):
        with pytest.raises(InvalidGraphError, match="missing node"):
            DomainGraph(2, ((0, 2), (1, 0)))

    def test_undirected_expansion(self):
        g = DomainGraph.undirected(3, [(0, 1), (1, 2)])
        assert set(g.edges) == {(0, 1), (1, 0), (1, 2), (2, 1)}


class TestBuildGenerator:
    def test_two_node_complete(self):
        g = DomainGraph.undirected(2, [(0, 1)], walker_rate=1.0)
        q = build_generator(g).rates
        assert np.array_equal(q, np.array([[-1.0, 1.0], [1.0, -1.0]]))

    def test_directed_cycle_rate_two(self):
        g = DomainGraph(3, ((0, 1), (1, 2), (2, 0)), walker_rate=2.0)
        q = build_generator(g).rates
        expected = np.array([[-2.0, 2.0, 0.0], [0.0, -2.0, 2.0], [2.0, 0.0, -2.0]])
        assert np.array_equal(q, expected)

    def test_reference_rows_sum_to_zero(self, reference_5node):
        q = build_generator(reference_5node.hierarchy.tiers[0].graph).rates
        # Direct row summation, the stated oracle.
        for i in range(q.shape[0]):
            assert abs(sum(q[i, j] for j in range(q.shape[1]))) < 1e-15

    def test_rates_split_by_out_degree(self):
        g = DomainGraph(3, ((0, 1), (0, 2), (1, 0), (2, 0)), walker_rate=3.0)
        q = build_generator(g).rates
        assert q[0, 1] == q[0, 2] == 1.5
        assert q[1, 0] == 3.0


class TestUniformize:
    def test_identity_cancellation(self):
        g = DomainGraph.undirected(2, [(0, 1)])
        p = uniformize(build_generator(g), 1.0).transition
        assert np.array_equal(p, np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_slower_rate_adds_self_loops(self):
        g = DomainGraph.undirected(2, [(0, 1)])
        p = uniformize(build_generator(g), 2.0).transition
        assert np.allclose(p, 0.5)

    def test_default_rate_is_walker_rate(self):
        g = DomainGraph.undirected(2, [(0, 1)], walker_rate=4.0)
        chain = uniformize(build_generator(g))
        assert chain.unif_rate == 4.0

    def test_rate_below_exit_rate_rejected(self):
        g = DomainGraph.undirected(2, [(0, 1)], walker_rate=2.0)
        with pytest.raises(ValueError, match="below"):
            uniformize(build_generator(g), 1.0)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_rows_stochastic_on_random_graphs(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        g = DomainGraph(n, tuple(random_walkable_graph(rng, n)), walker_rate=1.5)
        p = uniformize(build_generator(g), 2.0).transition
        assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-12)
        assert np.all(p >= 0)

    def test_off_diagonal_pattern_matches_adjacency(self):
        rng = np.random.default_rng(7)
        n = 6
        edges = random_walkable_graph(rng, n)
        g = DomainGraph(n, tuple(edges), walker_rate=1.0)
        p = uniformize(build_generator(g)).transition
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                assert (p[i, j] > 0) == ((i, j) in set(edges))


class TestMissMatrix:
    def test_full_absorption(self):
        g = DomainGraph.undirected(2, [(0, 1)])
        chain = uniformize(build_generator(g))
        sub = miss_matrix(chain, PlacementVector((0.0, 1.0)))
        assert np.array_equal(sub, np.array([[0.0, 0.0], [1.0, 0.0]]))

    def test_zero_placement_is_identity_case(self):
        g = DomainGraph.undirected(3, [(0, 1), (1, 2)])
        chain = uniformize(build_generator(g))
        sub = miss_matrix(chain, np.zeros(3))
        assert np.array_equal(sub, chain.transition)

    def test_reference_rows_shrink_where_content_sits(self, reference_5node):
        tier = reference_5node.hierarchy.tiers[0]
        chain = uniformize(build_generator(tier.graph))
        omega = np.array(tier.placement.probs)
        sub = miss_matrix(chain, omega)
        # Direct matrix product oracle.
        expected = chain.transition @ (np.eye(5) - np.diag(omega))
        assert np.allclose(sub, expected, atol=1e-15)
        p = chain.transition
        for i in range(5):
            touches = any(p[i, j] > 0 and omega[j] > 0 for j in range(5))
            assert (sub[i].sum() < 1.0 - 1e-12) == touches

    def test_row_sum_identity_exact(self):
        rng = np.random.default_rng(3)
        n = 7
        g = DomainGraph(n, tuple(random_walkable_graph(rng, n)))
        chain = uniformize(build_generator(g))
        omega = rng.random(n)
        sub = miss_matrix(chain, omega)
        p = chain.transition
        for i in range(n):
            assert sub[i].sum() == pytest.approx(1.0 - p[i] @ omega, abs=1e-14)

    def test_rejects_bad_probabilities(self):
        g = DomainGraph.undirected(2, [(0, 1)])
        chain = uniformize(build_generator(g))
        with pytest.raises(ValueError):
            miss_matrix(chain, np.array([0.0, 1.5]))

    def test_rejects_dimension_mismatch(self):
        g = DomainGraph.undirected(2, [(0, 1)])
        chain = uniformize(build_generator(g))
        with pytest.raises(ValueError, match="length"):
            miss_matrix(chain, np.array([0.0, 0.5, 0.5]))


class TestPlacementVector:
    def test_quenched_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            PlacementVector((0.3, 0.3, 0.3))

    def test_annealed_free_entries(self):
        pv = PlacementVector((1.0, 1.0), mode="annealed")
        assert pv.support() == (0, 1)

    def test_entries_bounded(self):
        with pytest.raises(ValueError, match="\\[0, 1\\]"):
            PlacementVector((1.2, -0.2), mode="annealed")


class TestInitialDistribution:
    def test_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            InitialDistribution((0.5, 0.4))

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            InitialDistribution((1.5, -0.5))
