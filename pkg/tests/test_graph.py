import numpy as np
import pytest

from grabnel.graph import (
    ConstraintMode,
    ConstraintSet,
    Flip,
    Graph,
    Inject,
    InvalidPerturbation,
    Rewire,
    Swap,
    apply_perturbation,
    check_constraint,
    connected_components,
    edit_distance_from_base,
    two_hop_neighbors,
)

from util import bfs_k_hop, dfs_component_count, random_graph


def triangle() -> Graph:
    return Graph(3, ((0, 1), (1, 2), (0, 2)))


class TestGraphValue:
    def test_canonicalises_edges(self):
        g = Graph(3, ((2, 1), (1, 0)))
        assert g.edges == ((0, 1), (1, 2))

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            Graph(2, ((1, 1),))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Graph(2, ((0, 2),))

    def test_rejects_duplicate_edges(self):
        with pytest.raises(ValueError):
            Graph(3, ((0, 1), (1, 0)))

    def test_rejects_negative_weight(self):
        with pytest.raises(ValueError):
            Graph(2, ((0, 1),), edge_weights=(-0.5,))

    def test_rejects_ragged_features(self):
        with pytest.raises(ValueError):
            Graph(2, (), node_features=((1.0,), (1.0, 2.0)))

    def test_weights_follow_edge_sort(self):
        g = Graph(3, ((2, 1), (0, 1)), edge_weights=(0.5, 0.9))
        assert g.edges == ((0, 1), (1, 2))
        assert g.edge_weights == (0.9, 0.5)


class TestApplyPerturbation:
    def test_flip_removes_edge(self):
        g = apply_perturbation(triangle(), Flip(0, 1))
        assert g.edges == ((0, 2), (1, 2))

    def test_flip_twice_is_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            g = random_graph(rng, int(rng.integers(2, 10)))
            u, v = rng.choice(g.num_nodes, 2, replace=False)
            p = Flip(int(u), int(v))
            assert apply_perturbation(apply_perturbation(g, p), p) == g

    def test_apply_leaves_input_unchanged(self):
        g = triangle()
        apply_perturbation(g, Flip(0, 1))
        assert g == triangle()

    def test_rewire_moves_edge(self):
        g = Graph(3, ((0, 1),))
        out = apply_perturbation(g, Rewire(0, 1, 2))
        assert out.edges == ((0, 2),)

    def test_rewire_requires_edge_present(self):
        g = Graph(3, ((0, 1), (1, 2)))
        with pytest.raises(InvalidPerturbation):
            apply_perturbation(g, Rewire(1, 2, 0))  # edge (1, 0) already exists

    def test_swap_exchanges_weights(self):
        g = Graph(3, ((0, 1), (0, 2)), edge_weights=(0.3, 0.7))
        out = apply_perturbation(g, Swap(0, 1, 2))
        assert out.weight(0, 1) == 0.7
        assert out.weight(0, 2) == 0.3

    def test_swap_with_absent_edge_moves_it(self):
        g = Graph(3, ((0, 1),), edge_weights=(0.4,))
        out = apply_perturbation(g, Swap(0, 1, 2))
        assert out.edges == ((0, 2),)
        assert out.weight(0, 2) == 0.4

    def test_inject_appends_node(self):
        g = Graph(3, ((0, 1),), node_labels=(0, 0, 1))
        out = apply_perturbation(g, Inject(features=1, connections=(0, 2)))
        assert out.num_nodes == 4
        assert out.node_labels == (0, 0, 1, 1)
        assert (0, 3) in out.edges and (2, 3) in out.edges

    def test_inject_feature_kind_must_match(self):
        g = Graph(2, (), node_labels=(0, 0))
        with pytest.raises(InvalidPerturbation):
            apply_perturbation(g, Inject(features=(1.0,), connections=(0,)))


class TestConstraints:
    def test_none_mode_admits_valid_perturbations(self):
        rng = np.random.default_rng(1)
        c = ConstraintSet()
        for _ in range(50):
            g = random_graph(rng, int(rng.integers(3, 9)))
            u, v = rng.choice(g.num_nodes, 2, replace=False)
            assert check_constraint(g, Flip(int(u), int(v)), c)

    def test_two_hop_addition_allowed(self):
        g = Graph(3, ((0, 1), (1, 2)))
        c = ConstraintSet(mode=ConstraintMode.TWO_HOP)
        assert check_constraint(g, Flip(0, 2), c)

    def test_two_hop_addition_blocked_at_three_hops(self):
        g = Graph(4, ((0, 1), (1, 2), (2, 3)))
        c = ConstraintSet(mode=ConstraintMode.TWO_HOP)
        assert not check_constraint(g, Flip(0, 3), c)

    def test_two_hop_deletion_always_allowed(self):
        g = Graph(4, ((0, 1), (1, 2), (2, 3)))
        c = ConstraintSet(mode=ConstraintMode.TWO_HOP)
        assert check_constraint(g, Flip(0, 1), c)

    def test_two_hop_rewire_rejects_non_rewire(self):
        g = Graph(3, ((0, 1), (1, 2)))
        c = ConstraintSet(mode=ConstraintMode.TWO_HOP_REWIRE)
        assert not check_constraint(g, Flip(0, 2), c)
        assert not check_constraint(g, Swap(0, 1, 2), c)

    def test_two_hop_rewire_distance_rule(self):
        g = Graph(5, ((0, 1), (1, 2), (2, 3), (3, 4)))
        c = ConstraintSet(mode=ConstraintMode.TWO_HOP_REWIRE)
        assert check_constraint(g, Rewire(2, 3, 0), c)  # 0 is 2 hops from 2
        assert not check_constraint(g, Rewire(0, 1, 3), c)  # 3 is 3 hops from 0

    def test_preserve_components_blocks_merge(self):
        g = Graph(4, ((0, 1), (2, 3)))
        c = ConstraintSet(mode=ConstraintMode.PRESERVE_COMPONENTS)
        assert not check_constraint(g, Flip(1, 2), c)
        assert dfs_component_count(apply_perturbation(g, Flip(1, 2))) == 1

    def test_preserve_components_property(self):
        rng = np.random.default_rng(2)
        c = ConstraintSet(mode=ConstraintMode.PRESERVE_COMPONENTS)
        checked = 0
        for _ in range(200):
            g = random_graph(rng, int(rng.integers(3, 10)), p=0.25)
            u, v = rng.choice(g.num_nodes, 2, replace=False)
            p = Flip(int(u), int(v))
            if check_constraint(g, p, c):
                checked += 1
                assert connected_components(apply_perturbation(g, p)) == connected_components(g)
        assert checked > 20

    def test_injection_node_budget(self):
        g = Graph(20, ((0, 1),), node_labels=(0,) * 20)
        c = ConstraintSet(max_inject_fraction=0.05).with_base(g)
        p = Inject(features=0, connections=(0,))
        assert check_constraint(g, p, c)  # budget is one node
        g2 = apply_perturbation(g, p)
        assert not check_constraint(g2, p, c)  # budget exhausted

    def test_injection_edge_cap(self):
        g = Graph(10, tuple((i, i + 1) for i in range(9)), node_labels=(0,) * 10)
        c = ConstraintSet(max_edges_per_injected_node=2).with_base(g)
        assert check_constraint(g, Inject(features=0, connections=(0, 1)), c)
        assert not check_constraint(g, Inject(features=0, connections=(0, 1, 2)), c)


class TestAlgorithms:
    def test_components_empty_graph(self):
        assert connected_components(Graph(4, ())) == 4

    def test_components_triangle(self):
        assert connected_components(triangle()) == 1

    def test_components_three_pairs(self):
        g = Graph(6, ((0, 1), (2, 3), (4, 5)))
        assert connected_components(g) == 3
        assert dfs_component_count(g) == 3

    def test_components_match_dfs_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            g = random_graph(rng, int(rng.integers(1, 15)), p=0.15)
            assert connected_components(g) == dfs_component_count(g)

    def test_two_hop_star(self):
        g = Graph(5, ((0, 1), (0, 2), (0, 3), (0, 4)))
        assert two_hop_neighbors(g, 1) == {0, 2, 3, 4}

    def test_two_hop_path(self):
        g = Graph(4, ((0, 1), (1, 2), (2, 3)))
        assert two_hop_neighbors(g, 0) == {1, 2}

    def test_two_hop_matches_bfs_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            g = random_graph(rng, 15, p=0.2)
            u = int(rng.integers(0, 15))
            assert two_hop_neighbors(g, u) == bfs_k_hop(g, u, 2)

    def test_two_hop_exhaustive_small(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(2, 11))
            g = random_graph(rng, n, p=0.3)
            for u in range(n):
                assert two_hop_neighbors(g, u) == bfs_k_hop(g, u, 2)


class TestEditDistance:
    def test_single_flip(self):
        assert edit_distance_from_base([Flip(0, 1)]) == 1

    def test_flip_cancellation(self):
        assert edit_distance_from_base([Flip(0, 1), Flip(0, 1)]) == 0

    def test_partial_cancellation(self):
        assert edit_distance_from_base([Flip(0, 1), Flip(2, 3), Flip(0, 1)]) == 1

    def test_non_flip_edits_count_raw(self):
        assert edit_distance_from_base([Rewire(0, 1, 2), Swap(0, 1, 2)]) == 2
