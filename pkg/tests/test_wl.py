from collections import Counter

import numpy as np
import pytest

from grabnel.graph import Graph
from grabnel.wl import (
    ContinuousFeatureCache,
    DiscreteFeatureCache,
    TypeMismatch,
    WLVocabulary,
    continuous_levels,
    refit_vocabulary,
    wl_extract_continuous,
    wl_extract_discrete,
)

from util import random_graph


def brute_force_counts(g: Graph, num_iterations: int) -> list[Counter]:
    """Uncompressed refined-label strings, counted per level (oracle)."""
    adj = g.neighbor_sets()
    labels = [str(l) for l in g.node_labels]
    out = [Counter(labels)]
    for _ in range(num_iterations):
        labels = [
            labels[v] + "|" + ",".join(sorted(labels[u] for u in adj[v]))
            for v in range(g.num_nodes)
        ]
        out.append(Counter(labels))
    return out


def counts_by_string(matrix_row: np.ndarray, vocab: WLVocabulary) -> list[dict[str, float]]:
    out = []
    for h, level in enumerate(vocab.levels):
        offset = vocab.level_offset(h)
        out.append({
            vocab.uncompressed(h, idx): matrix_row[offset + idx]
            for idx in level.values() if matrix_row[offset + idx] != 0
        })
    return out


class TestDiscreteExtraction:
    def test_level_zero_counts_three_colours(self):
        # Five nodes carrying three distinct labels: two of 0, two of 1, one of 2.
        g = Graph(5, ((0, 1), (1, 2), (2, 3), (3, 4)), node_labels=(0, 0, 1, 1, 2))
        matrix, vocab = wl_extract_discrete([g], num_iterations=1)
        assert list(matrix[0, :3]) == [2, 2, 1]

    def test_single_isolated_node(self):
        g = Graph(1, (), node_labels=(7,))
        matrix, vocab = wl_extract_discrete([g], num_iterations=1)
        assert matrix.shape == (1, 2)
        assert list(matrix[0]) == [1, 1]

    def test_isomorphic_graphs_share_rows(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            g = random_graph(rng, int(rng.integers(2, 9)), labels=3)
            perm = rng.permutation(g.num_nodes)
            mapped_edges = tuple((int(perm[u]), int(perm[v])) for u, v in g.edges)
            labels = [0] * g.num_nodes
            for v in range(g.num_nodes):
                labels[int(perm[v])] = g.node_labels[v]
            h = Graph(g.num_nodes, mapped_edges, node_labels=tuple(labels))
            matrix, _ = wl_extract_discrete([g, h], num_iterations=2)
            assert np.array_equal(matrix[0], matrix[1])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(500):
            num_iter = int(rng.integers(1, 4))
            graphs = [
                random_graph(rng, int(rng.integers(1, 9)), p=0.35, labels=3)
                for _ in range(int(rng.integers(1, 4)))
            ]
            matrix, vocab = wl_extract_discrete(graphs, num_iterations=num_iter)
            for gi, g in enumerate(graphs):
                expected = brute_force_counts(g, num_iter)
                got = counts_by_string(matrix[gi], vocab)
                assert got == [dict(c) for c in expected]

    def test_rejects_continuous_graphs(self):
        g = Graph(2, ((0, 1),), node_features=((1.0,), (2.0,)))
        with pytest.raises(TypeMismatch):
            wl_extract_discrete([g], num_iterations=1)

    def test_monotone_vocabulary(self):
        rng = np.random.default_rng(2)
        small = [random_graph(rng, 6, labels=3) for _ in range(3)]
        extra = [random_graph(rng, 6, labels=4) for _ in range(3)]
        m_small, v_small = wl_extract_discrete(small, num_iterations=2)
        m_full, v_full = wl_extract_discrete(small + extra, num_iterations=2)
        for gi in range(len(small)):
            assert counts_by_string(m_small[gi], v_small) == counts_by_string(m_full[gi], v_full)


class TestVocabularyRefit:
    def test_no_new_labels_leaves_vocabulary_unchanged(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, 6, labels=2)
        _, vocab = wl_extract_discrete([g], num_iterations=1)
        again = refit_vocabulary(vocab, [g])
        assert again.levels == vocab.levels

    def test_new_label_grows_to_batch_dimension(self):
        g1 = Graph(2, ((0, 1),), node_labels=(0, 0))
        g2 = Graph(2, ((0, 1),), node_labels=(0, 5))
        _, vocab1 = wl_extract_discrete([g1], num_iterations=1)
        grown = refit_vocabulary(vocab1, [g2])
        _, batch = wl_extract_discrete([g1, g2], num_iterations=1)
        assert grown.dimension == batch.dimension

    def test_existing_columns_keep_indices(self):
        rng = np.random.default_rng(4)
        first = [random_graph(rng, 5, labels=2) for _ in range(2)]
        _, vocab = wl_extract_discrete(first, num_iterations=2)
        before = [dict(d) for d in vocab.levels]
        grown = refit_vocabulary(vocab, [random_graph(rng, 5, labels=4)])
        for h, level in enumerate(before):
            for key, idx in level.items():
                assert grown.levels[h][key] == idx

    def test_batch_vs_incremental_stream(self):
        rng = np.random.default_rng(5)
        graphs = [random_graph(rng, int(rng.integers(2, 8)), labels=3) for _ in range(12)]
        cache = DiscreteFeatureCache(num_iterations=2)
        for g in graphs:
            cache.add(g)
        batch_matrix, batch_vocab = wl_extract_discrete(graphs, num_iterations=2)
        inc_matrix = cache.matrix()
        for gi in range(len(graphs)):
            assert counts_by_string(inc_matrix[gi], cache.vocab) == \
                counts_by_string(batch_matrix[gi], batch_vocab)


class TestContinuousExtraction:
    def test_isolated_node_halves(self):
        g = Graph(1, (), node_features=((2.0,),))
        levels = continuous_levels(g, 1)
        assert levels[1].tolist() == [[1.0]]
        rows = wl_extract_continuous([g], num_iterations=1)
        assert rows.tolist() == [[2.0, 1.0]]

    def test_two_node_average(self):
        g = Graph(2, ((0, 1),), node_features=((0.0,), (2.0,)))
        levels = continuous_levels(g, 1)
        assert levels[1].tolist() == [[1.0], [1.0]]

    def test_weights_scale_neighbour_term(self):
        g = Graph(2, ((0, 1),), edge_weights=(0.5,), node_features=((0.0,), (2.0,)))
        levels = continuous_levels(g, 1)
        assert levels[1][0, 0] == pytest.approx(0.5)
        assert levels[1][1, 0] == pytest.approx(1.0)

    def test_linearity_in_features(self):
        rng = np.random.default_rng(6)
        feats = tuple(tuple(map(float, rng.normal(size=2))) for _ in range(5))
        g = Graph(5, ((0, 1), (1, 2), (2, 3), (0, 4)), node_features=feats)
        scaled = Graph(5, g.edges, node_features=tuple(
            tuple(3.0 * x for x in row) for row in feats))
        a = wl_extract_continuous([g], num_iterations=2)
        b = wl_extract_continuous([scaled], num_iterations=2)
        assert np.allclose(3.0 * a, b)

    def test_zero_iterations_returns_raw_features(self):
        g = Graph(2, ((0, 1),), node_features=((1.0, 2.0), (3.0, 4.0)))
        rows = wl_extract_continuous([g], num_iterations=0)
        assert rows.tolist() == [[1.0, 2.0, 3.0, 4.0]]

    def test_pooled_rows_for_mixed_sizes(self):
        g1 = Graph(2, ((0, 1),), node_features=((1.0,), (2.0,)))
        g2 = Graph(3, ((0, 1),), node_features=((1.0,), (1.0,), (1.0,)))
        rows = wl_extract_continuous([g1, g2], num_iterations=1)
        assert rows.shape == (2, 2)
        assert rows[0, 0] == pytest.approx(3.0)

    def test_mixed_sizes_without_pooling_rejected(self):
        g1 = Graph(2, ((0, 1),), node_features=((1.0,), (2.0,)))
        g2 = Graph(3, (), node_features=((1.0,), (1.0,), (1.0,)))
        with pytest.raises(ValueError):
            wl_extract_continuous([g1, g2], num_iterations=1, pooled=False)

    def test_rejects_discrete_graphs(self):
        g = Graph(2, ((0, 1),), node_labels=(0, 1))
        with pytest.raises(TypeMismatch):
            wl_extract_continuous([g], num_iterations=1)

    def test_cache_matches_batch(self):
        rng = np.random.default_rng(7)
        graphs = []
        for _ in range(4):
            feats = tuple(tuple(map(float, rng.normal(size=2))) for _ in range(4))
            graphs.append(Graph(4, ((0, 1), (2, 3)), node_features=feats))
        cache = ContinuousFeatureCache(num_iterations=1, pooled=False)
        for g in graphs:
            cache.add(g)
        assert np.allclose(cache.matrix(), wl_extract_continuous(graphs, num_iterations=1))
