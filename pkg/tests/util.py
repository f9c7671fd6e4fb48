"""Shared helpers for the test suite: random graphs and brute-force oracles."""

from __future__ import annotations

import numpy as np

from grabnel.graph import Graph


def random_graph(rng: np.random.Generator, n: int, p: float = 0.3,
                 labels: int | None = 2, weighted: bool = False) -> Graph:
    """Erdos-Renyi style random graph with optional labels/weights."""
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v))
    weights = tuple(float(w) for w in rng.uniform(0.1, 2.0, len(edges))) if weighted else None
    node_labels = tuple(int(x) for x in rng.integers(0, labels, n)) if labels else None
    return Graph(num_nodes=n, edges=tuple(edges), edge_weights=weights, node_labels=node_labels)


def dfs_component_count(g: Graph) -> int:
    """Depth-first-search component count (oracle for the union-find path)."""
    adj = g.neighbor_sets()
    seen = [False] * g.num_nodes
    count = 0
    for start in range(g.num_nodes):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    stack.append(y)
    return count


def bfs_k_hop(g: Graph, u: int, k: int) -> set[int]:
    """Nodes within k hops of u via explicit breadth-first search (oracle)."""
    adj = g.neighbor_sets()
    frontier = {u}
    seen = {u}
    out: set[int] = set()
    for _ in range(k):
        frontier = {y for x in frontier for y in adj[x]} - seen
        seen |= frontier
        out |= frontier
    return out
