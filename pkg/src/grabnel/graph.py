"""Graph values, edge perturbations, and admissibility constraints."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Union


class InvalidPerturbation(ValueError):
    """Raised when a perturbation does not satisfy its preconditions."""


def _canonical_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with optional weights and node data.

    Edges are stored once as sorted (u, v) pairs with u < v; ``edge_weights``,
    when present, is aligned with ``edges``. Node data is either one integer
    label per node (``node_labels``) or one fixed-length float vector per node
    (``node_features``), never both.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...] = ()
    edge_weights: tuple[float, ...] | None = None
    node_labels: tuple[int, ...] | None = None
    node_features: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self) -> None:
        if self.num_nodes < 0:
            raise ValueError("num_nodes must be non-negative")
        pairs = [(_canonical_edge(int(u), int(v))) for u, v in self.edges]
        for u, v in pairs:
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError(f"edge ({u}, {v}) out of range for n={self.num_nodes}")
        if self.edge_weights is not None:
            weights = tuple(float(w) for w in self.edge_weights)
            if len(weights) != len(pairs):
                raise ValueError("edge_weights must align with edges")
            if any(w < 0 for w in weights):
                raise ValueError("edge weights must be non-negative")
            order = sorted(range(len(pairs)), key=lambda i: pairs[i])
            pairs_sorted = [pairs[i] for i in order]
            weights_sorted = tuple(weights[i] for i in order)
            object.__setattr__(self, "edge_weights", weights_sorted)
        else:
            pairs_sorted = sorted(pairs)
        if len(set(pairs_sorted)) != len(pairs_sorted):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", tuple(pairs_sorted))

        if self.node_labels is not None and self.node_features is not None:
            raise ValueError("node_labels and node_features are mutually exclusive")
        if self.node_labels is not None:
            labels = tuple(int(x) for x in self.node_labels)
            if len(labels) != self.num_nodes:
                raise ValueError("node_labels length must equal num_nodes")
            object.__setattr__(self, "node_labels", labels)
        if self.node_features is not None:
            feats = tuple(tuple(float(x) for x in row) for row in self.node_features)
            if len(feats) != self.num_nodes:
                raise ValueError("node_features length must equal num_nodes")
            dims = {len(row) for row in feats}
            if len(dims) > 1:
                raise ValueError("node feature vectors must share one length")
            object.__setattr__(self, "node_features", feats)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return _canonical_edge(u, v) in set(self.edges)

    def weight_map(self) -> dict[tuple[int, int], float]:
        """Edge -> weight, with weight 1 for every edge of an unweighted graph."""
        if self.edge_weights is None:
            return {e: 1.0 for e in self.edges}
        return dict(zip(self.edges, self.edge_weights))

    def weight(self, u: int, v: int) -> float:
        """Weight of edge (u, v); absent edges have weight 0."""
        return self.weight_map().get(_canonical_edge(u, v), 0.0)

    def neighbor_sets(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def degrees(self) -> list[int]:
        deg = [0] * self.num_nodes
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


# ---------------------------------------------------------------------------
# Perturbations


@dataclass(frozen=True)
class Flip:
    """Toggle presence of edge {u, v} (added edges get weight 1)."""

    u: int
    v: int

    def __post_init__(self) -> None:
        u, v = _canonical_edge(self.u, self.v)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class Rewire:
    """Remove edge (u, v) and attach its weight to (u, s) instead."""

    u: int
    v: int
    s: int


@dataclass(frozen=True)
class Swap:
    """Exchange weights w(u, v) and w(u, s); an absent edge counts as weight 0."""

    u: int
    v: int
    s: int


@dataclass(frozen=True)
class Inject:
    """Add one new node (index n) with its data and edges to existing nodes."""

    features: Union[int, tuple[float, ...]]
    connections: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "connections", tuple(sorted(int(c) for c in self.connections)))
        if not isinstance(self.features, int):
            object.__setattr__(self, "features", tuple(float(x) for x in self.features))


Perturbation = Union[Flip, Rewire, Swap, Inject]


class AttackMode(Enum):
    """Which perturbation family an attack searches over."""

    FLIP = "flip"
    REWIRE = "rewire"
    SWAP = "swap"
    INJECT = "inject"


def perturbation_key(p: Perturbation) -> tuple:
    """Deterministic sort key used for tie-breaking and canonical ordering."""
    if isinstance(p, Flip):
        return (0, p.u, p.v)
    if isinstance(p, Rewire):
        return (1, p.u, p.v, p.s)
    if isinstance(p, Swap):
        return (2, p.u, p.v, p.s)
    feats = (p.features,) if isinstance(p.features, int) else tuple(p.features)
    return (3,) + tuple(p.connections) + feats


def validate_perturbation(g: Graph, p: Perturbation) -> None:
    """Raise InvalidPerturbation unless p can be applied to g."""
    n = g.num_nodes
    if isinstance(p, Flip):
        if not (0 <= p.u < n and 0 <= p.v < n):
            raise InvalidPerturbation(f"flip endpoints out of range: {p}")
        if p.u == p.v:
            raise InvalidPerturbation("flip endpoints must be distinct")
    elif isinstance(p, (Rewire, Swap)):
        trio = (p.u, p.v, p.s)
        if len(set(trio)) != 3:
            raise InvalidPerturbation(f"end nodes must be distinct: {p}")
        if not all(0 <= x < n for x in trio):
            raise InvalidPerturbation(f"end nodes out of range: {p}")
        if isinstance(p, Rewire):
            if not g.has_edge(p.u, p.v):
                raise InvalidPerturbation(f"rewire requires edge ({p.u}, {p.v}) present")
            if g.has_edge(p.u, p.s):
                raise InvalidPerturbation(f"rewire requires edge ({p.u}, {p.s}) absent")
    elif isinstance(p, Inject):
        conns = p.connections
        if len(set(conns)) != len(conns):
            raise InvalidPerturbation("inject connections must be distinct")
        if any(not (0 <= c < n) for c in conns):
            raise InvalidPerturbation("inject connection out of range")
        if g.node_labels is not None and not isinstance(p.features, int):
            raise InvalidPerturbation("graph has discrete labels; inject needs an int label")
        if g.node_features is not None:
            if isinstance(p.features, int):
                raise InvalidPerturbation("graph has continuous features; inject needs a vector")
            dim = len(g.node_features[0]) if g.node_features else len(p.features)
            if len(p.features) != dim:
                raise InvalidPerturbation("injected feature vector has wrong length")
    else:
        raise InvalidPerturbation(f"unknown perturbation type: {type(p)!r}")


def apply_perturbation(g: Graph, p: Perturbation) -> Graph:
    """Return a new graph with p applied; g is never modified."""
    validate_perturbation(g, p)
    weights = g.weight_map()
    weighted = g.edge_weights is not None

    if isinstance(p, Flip):
        e = _canonical_edge(p.u, p.v)
        if e in weights:
            del weights[e]
        else:
            weights[e] = 1.0
        return _rebuild(g, g.num_nodes, weights, weighted)

    if isinstance(p, Rewire):
        old = _canonical_edge(p.u, p.v)
        new = _canonical_edge(p.u, p.s)
        weights[new] = weights.pop(old)
        return _rebuild(g, g.num_nodes, weights, weighted)

    if isinstance(p, Swap):
        e1 = _canonical_edge(p.u, p.v)
        e2 = _canonical_edge(p.u, p.s)
        w1 = weights.pop(e1, 0.0)
        w2 = weights.pop(e2, 0.0)
        if w2 > 0:
            weights[e1] = w2
        if w1 > 0:
            weights[e2] = w1
        return _rebuild(g, g.num_nodes, weights, weighted)

    # Inject: the new node takes index n.
    new_node = g.num_nodes
    for c in p.connections:
        weights[(c, new_node)] = 1.0
    labels = None
    feats = None
    if g.node_labels is not None:
        labels = g.node_labels + (int(p.features),)
    elif g.node_features is not None:
        feats = g.node_features + (tuple(p.features),)
    edges = tuple(sorted(weights))
    return Graph(
        num_nodes=new_node + 1,
        edges=edges,
        edge_weights=tuple(weights[e] for e in edges) if weighted else None,
        node_labels=labels,
        node_features=feats,
    )


def _rebuild(g: Graph, num_nodes: int, weights: dict[tuple[int, int], float], weighted: bool) -> Graph:
    edges = tuple(sorted(weights))
    return Graph(
        num_nodes=num_nodes,
        edges=edges,
        edge_weights=tuple(weights[e] for e in edges) if weighted else None,
        node_labels=g.node_labels,
        node_features=g.node_features,
    )


# ---------------------------------------------------------------------------
# Constraints


class ConstraintMode(Enum):
    NONE = "none"
    TWO_HOP = "2hop"
    TWO_HOP_REWIRE = "2hop-rewire"
    PRESERVE_COMPONENTS = "preserve-components"


@dataclass(frozen=True)
class ConstraintSet:
    """Admissibility rules checked against (base graph, perturbation) pairs.

    ``original_num_nodes`` anchors the injection budget to the unperturbed
    graph; when unset the current graph is treated as the original.
    """

    mode: ConstraintMode = ConstraintMode.NONE
    max_inject_fraction: float = 0.05
    max_edges_per_injected_node: int | None = None
    original_num_nodes: int | None = None

    def with_base(self, g: Graph) -> "ConstraintSet":
        return ConstraintSet(
            mode=self.mode,
            max_inject_fraction=self.max_inject_fraction,
            max_edges_per_injected_node=self.max_edges_per_injected_node,
            original_num_nodes=g.num_nodes,
        )


def _injection_admissible(g: Graph, p: Inject, c: ConstraintSet) -> bool:
    n0 = c.original_num_nodes if c.original_num_nodes is not None else g.num_nodes
    budget = max(1, math.floor(c.max_inject_fraction * n0))
    if g.num_nodes - n0 >= budget:
        return False
    cap = c.max_edges_per_injected_node
    if cap is None:
        # Default: the average number of edges an existing node has.
        cap = max(1, round(2 * g.num_edges / g.num_nodes)) if g.num_nodes else 1
    return len(p.connections) <= cap


def check_constraint(g: Graph, p: Perturbation, c: ConstraintSet) -> bool:
    """True iff p is admissible on g under c. Pure predicate; p must be valid."""
    if isinstance(p, Inject) and not _injection_admissible(g, p, c):
        return False

    if c.mode is ConstraintMode.NONE:
        return True

    if c.mode is ConstraintMode.TWO_HOP:
        added = _added_edge(g, p)
        if added is None:
            return True
        u, v = added
        return v in two_hop_neighbors(g, u)

    if c.mode is ConstraintMode.TWO_HOP_REWIRE:
        if not isinstance(p, Rewire):
            return False
        return p.s in two_hop_neighbors(g, p.u)

    if c.mode is ConstraintMode.PRESERVE_COMPONENTS:
        return connected_components(apply_perturbation(g, p)) == connected_components(g)

    raise ValueError(f"unknown constraint mode {c.mode!r}")


def _added_edge(g: Graph, p: Perturbation) -> tuple[int, int] | None:
    """The edge between existing nodes that p adds, if any.

    Injection edges start at a brand-new node and have no prior distance to
    constrain, so they never count as an addition here.
    """
    if isinstance(p, Flip):
        return None if g.has_edge(p.u, p.v) else (p.u, p.v)
    if isinstance(p, Rewire):
        return (p.u, p.s)
    if isinstance(p, Swap):
        w_uv = g.weight(p.u, p.v)
        w_us = g.weight(p.u, p.s)
        if w_uv > 0 and w_us == 0:
            return (p.u, p.s)
        if w_us > 0 and w_uv == 0:
            return (p.u, p.v)
        return None
    return None


# ---------------------------------------------------------------------------
# Basic graph algorithms


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri


def connected_components(g: Graph) -> int:
    """Number of connected components, counting isolated nodes."""
    uf = _UnionFind(g.num_nodes)
    for u, v in g.edges:
        uf.union(u, v)
    return len({uf.find(i) for i in range(g.num_nodes)})


def two_hop_neighbors(g: Graph, u: int) -> set[int]:
    """Nodes at shortest-path distance 1 or 2 from u (u excluded)."""
    if not (0 <= u < g.num_nodes):
        raise ValueError(f"node {u} out of range")
    adj = g.neighbor_sets()
    out = set(adj[u])
    for v in adj[u]:
        out |= adj[v]
    out.discard(u)
    return out


def bfs_distances(g: Graph, source: int) -> list[int]:
    """Shortest-path hop counts from source; -1 for unreachable nodes."""
    adj = g.neighbor_sets()
    dist = [-1] * g.num_nodes
    dist[source] = 0
    queue = deque([source])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def edit_distance_from_base(perturbations: Iterable[Perturbation]) -> int:
    """Net edit count: an even number of flips of the same pair cancels out."""
    flip_parity: dict[tuple[int, int], int] = {}
    others = 0
    for p in perturbations:
        if isinstance(p, Flip):
            e = _canonical_edge(p.u, p.v)
            flip_parity[e] = flip_parity.get(e, 0) ^ 1
        else:
            others += 1
    return sum(flip_parity.values()) + others
