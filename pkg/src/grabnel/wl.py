"""Weisfeiler-Lehman feature extraction for discrete and continuous node data.

Discrete graphs get subtree-pattern count vectors: at every level each node's
key is (own label, sorted multiset of neighbour labels), compressed through a
shared dictionary so that one column of the feature matrix means the same
refined label for every graph. Continuous graphs get the averaged-neighbour
refinement instead, with the per-level node features vectorised (or summed
over nodes when graphs differ in size).

Level 0 (the raw labels/features) is always included as the first block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph


class TypeMismatch(TypeError):
    """Graph node-data kind does not match the requested extractor."""


Key = object  # level 0: int label; level h: (prev_id, tuple of sorted prev_ids)


@dataclass
class WLVocabulary:
    """Per-level dictionaries mapping refined-label keys to column indices.

    Column indices are contiguous within each level and stable under
    extension: new keys are appended after existing ones, in sorted order
    within each extension batch.
    """

    num_levels: int
    levels: list[dict[Key, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.levels:
            self.levels = [dict() for _ in range(self.num_levels + 1)]

    @property
    def dimension(self) -> int:
        return sum(len(d) for d in self.levels)

    def level_offset(self, h: int) -> int:
        return sum(len(d) for d in self.levels[:h])

    def copy(self) -> "WLVocabulary":
        return WLVocabulary(self.num_levels, [dict(d) for d in self.levels])

    # -- construction ------------------------------------------------------

    def extend(self, graphs: list[Graph]) -> None:
        """Add every refined key occurring in ``graphs`` (in-place)."""
        per_graph = [self._initial_ids(g, grow=True) for g in graphs]
        for h in range(1, self.num_levels + 1):
            keys = []
            for g, ids in zip(graphs, per_graph):
                keys.extend(self._level_keys(g, ids))
            for key in sorted(set(keys) - set(self.levels[h])):
                self.levels[h][key] = len(self.levels[h])
            per_graph = [
                [self.levels[h][k] for k in self._level_keys(g, ids)]
                for g, ids in zip(graphs, per_graph)
            ]

    def _initial_ids(self, g: Graph, grow: bool) -> list[int | None]:
        if g.node_labels is None:
            raise TypeMismatch("discrete WL extraction needs node labels")
        if grow:
            for label in sorted(set(g.node_labels) - set(self.levels[0])):
                self.levels[0][label] = len(self.levels[0])
        return [self.levels[0].get(label) for label in g.node_labels]

    @staticmethod
    def _level_keys(g: Graph, prev_ids: list[int | None]) -> list[Key | None]:
        adj = g.neighbor_sets()
        keys: list[Key | None] = []
        for v in range(g.num_nodes):
            own = prev_ids[v]
            neigh = [prev_ids[u] for u in adj[v]]
            if own is None or any(x is None for x in neigh):
                keys.append(None)
            else:
                keys.append((own, tuple(sorted(neigh))))
        return keys

    # -- extraction --------------------------------------------------------

    def row(self, g: Graph) -> np.ndarray:
        """Count vector of g against this vocabulary; unknown keys count as nothing."""
        out = np.zeros(self.dimension)
        for h, counts in enumerate(self.sparse_counts(g)):
            offset = self.level_offset(h)
            for idx, c in counts.items():
                out[offset + idx] = c
        return out

    def sparse_counts(self, g: Graph) -> list[dict[int, int]]:
        """Per-level {column-in-level: count}; keys absent from the vocabulary
        (possible for candidate graphs never folded in) are dropped."""
        ids = self._initial_ids(g, grow=False)
        out = []
        for h in range(self.num_levels + 1):
            if h > 0:
                keys = self._level_keys(g, ids)
                ids = [self.levels[h].get(k) if k is not None else None for k in keys]
            counts: dict[int, int] = {}
            for i in ids:
                if i is not None:
                    counts[i] = counts.get(i, 0) + 1
            out.append(counts)
        return out

    # -- introspection -----------------------------------------------------

    def uncompressed(self, h: int, idx: int) -> str:
        """Expand a column back to its explicit refined-label string."""
        key = next(k for k, i in self.levels[h].items() if i == idx)
        return self._expand(h, key)

    def _expand(self, h: int, key: Key) -> str:
        if h == 0:
            return str(key)
        own, neigh = key  # type: ignore[misc]
        own_s = self._expand_id(h - 1, own)
        neigh_s = sorted(self._expand_id(h - 1, i) for i in neigh)
        return own_s + "|" + ",".join(neigh_s)

    def _expand_id(self, h: int, idx: int) -> str:
        key = next(k for k, i in self.levels[h].items() if i == idx)
        return self._expand(h, key)


def refit_vocabulary(existing: WLVocabulary, new_graphs: list[Graph]) -> WLVocabulary:
    """Superset vocabulary covering new_graphs; existing columns keep indices."""
    out = existing.copy()
    out.extend(new_graphs)
    return out


def wl_extract_discrete(graphs: list[Graph], num_iterations: int = 1) -> tuple[np.ndarray, WLVocabulary]:
    """Stacked count rows for all graphs plus the vocabulary built from them."""
    if num_iterations < 0:
        raise ValueError("number of iterations must be non-negative")
    vocab = WLVocabulary(num_iterations)
    vocab.extend(list(graphs))
    matrix = np.stack([vocab.row(g) for g in graphs]) if graphs else np.zeros((0, 0))
    return matrix, vocab


# ---------------------------------------------------------------------------
# Continuous refinement


def continuous_levels(g: Graph, num_iterations: int) -> list[np.ndarray]:
    """Node-feature matrices X_0 .. X_H under the averaged-neighbour update.

    x_{h+1}(v) = 1/2 (x_h(v) + mean-of-weighted-neighbours); nodes of degree
    zero use a zero neighbour term.
    """
    if g.node_features is None:
        raise TypeMismatch("continuous WL extraction needs node feature vectors")
    x = np.asarray(g.node_features, dtype=float)
    if x.size == 0:
        return [x for _ in range(num_iterations + 1)]
    n = g.num_nodes
    w = np.zeros((n, n))
    for (u, v), weight in g.weight_map().items():
        w[u, v] = weight
        w[v, u] = weight
    deg = np.array([len(s) for s in g.neighbor_sets()], dtype=float)
    inv_deg = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    levels = [x]
    for _ in range(num_iterations):
        x = 0.5 * (x + inv_deg[:, None] * (w @ x))
        levels.append(x)
    return levels


def wl_extract_continuous(graphs: list[Graph], num_iterations: int = 1,
                          pooled: bool | None = None) -> np.ndarray:
    """Per-graph rows of concatenated per-level features.

    Rows are the vectorised per-node features when every graph has the same
    node count; otherwise (or when ``pooled`` is forced) each level is summed
    over nodes so rows stay comparable.
    """
    if not graphs:
        return np.zeros((0, 0))
    sizes = {g.num_nodes for g in graphs}
    if pooled is None:
        pooled = len(sizes) > 1
    if not pooled and len(sizes) > 1:
        raise ValueError("vectorised rows need equal node counts; use pooled=True")
    rows = []
    for g in graphs:
        levels = continuous_levels(g, num_iterations)
        if pooled:
            rows.append(np.concatenate([lv.sum(axis=0) for lv in levels]))
        else:
            rows.append(np.concatenate([lv.reshape(-1) for lv in levels]))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Incremental caches used by the attack loop


class DiscreteFeatureCache:
    """Observed-graph feature store with a monotone vocabulary.

    Adding a graph folds its keys into the vocabulary; previously stored rows
    stay valid because columns are append-only, so the full matrix can be
    materialised at any time.
    """

    def __init__(self, num_iterations: int) -> None:
        self.vocab = WLVocabulary(num_iterations)
        self._counts: list[list[dict[int, int]]] = []

    def add(self, g: Graph) -> None:
        self.vocab.extend([g])
        self._counts.append(self.vocab.sparse_counts(g))

    def matrix(self) -> np.ndarray:
        out = np.zeros((len(self._counts), self.vocab.dimension))
        offsets = [self.vocab.level_offset(h) for h in range(self.vocab.num_levels + 1)]
        for r, per_level in enumerate(self._counts):
            for h, counts in enumerate(per_level):
                for idx, c in counts.items():
                    out[r, offsets[h] + idx] = c
        return out

    def row(self, g: Graph) -> np.ndarray:
        return self.vocab.row(g)

    @property
    def dimension(self) -> int:
        return self.vocab.dimension


class ContinuousFeatureCache:
    """Continuous-feature analogue; the row layout is fixed at construction."""

    def __init__(self, num_iterations: int, pooled: bool) -> None:
        self.num_iterations = num_iterations
        self.pooled = pooled
        self._rows: list[np.ndarray] = []

    def add(self, g: Graph) -> None:
        self._rows.append(self.row(g))

    def matrix(self) -> np.ndarray:
        return np.stack(self._rows) if self._rows else np.zeros((0, 0))

    def row(self, g: Graph) -> np.ndarray:
        levels = continuous_levels(g, self.num_iterations)
        if self.pooled:
            return np.concatenate([lv.sum(axis=0) for lv in levels])
        return np.concatenate([lv.reshape(-1) for lv in levels])

    @property
    def dimension(self) -> int:
        return self._rows[0].size if self._rows else 0
