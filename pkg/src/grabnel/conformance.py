"""Wire-protocol conformance fixtures for third-party victim adapters.

The kit fixes a tiny deterministic "toy degree classifier, v1" whose scores
any conforming server can reproduce bit-for-bit in IEEE double arithmetic:

    n = node count, m = undirected edge count,
    s = sum of node labels (or the sum of all feature entries),
    w = sum of edge weights (m when the graph is unweighted),
    logits = [0.07 * n - 0.011 * w, 0.05 * m + 0.003 * s], softmax in float64.

Fixtures are newline-delimited JSON: each entry carries the exact request
line an engine client would send and, for well-formed requests, the exact
response line a conforming server must produce. Malformed entries instead
set "expect_error"; servers must answer them with an error object and keep
serving.
"""

from __future__ import annotations

import json
import math
import sys

import numpy as np

from .data import graph_to_obj
from .graph import Graph

TOY_RULE_VERSION = "toy-degree-classifier-v1"


def toy_scores(n: int, m: int, label_sum: float, weight_sum: float) -> list[float]:
    """The reference arithmetic; operand order is part of the contract."""
    logit0 = 0.07 * n - 0.011 * weight_sum
    logit1 = 0.05 * m + 0.003 * label_sum
    peak = max(logit0, logit1)
    e0 = math.exp(logit0 - peak)
    e1 = math.exp(logit1 - peak)
    total = e0 + e1
    return [e0 / total, e1 / total]


def toy_scores_for_graph(g: Graph) -> list[float]:
    if g.node_labels is not None:
        label_sum = float(sum(g.node_labels))
    elif g.node_features is not None:
        label_sum = float(sum(sum(row) for row in g.node_features))
    else:
        label_sum = 0.0
    weight_sum = float(sum(g.edge_weights)) if g.edge_weights is not None else float(g.num_edges)
    return toy_scores(g.num_nodes, g.num_edges, label_sum, weight_sum)


def _random_graph(rng: np.random.Generator) -> Graph:
    n = int(rng.integers(1, 12))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = tuple(sorted(
        pairs[i] for i in rng.choice(len(pairs), size=int(rng.integers(0, len(pairs) + 1)),
                                     replace=False)
    )) if pairs else ()
    weights = None
    if edges and rng.random() < 0.3:
        weights = tuple(round(float(w), 6) for w in rng.uniform(0.1, 2.0, len(edges)))
    if rng.random() < 0.7:
        return Graph(n, edges, edge_weights=weights,
                     node_labels=tuple(int(x) for x in rng.integers(0, 3, n)))
    dim = int(rng.integers(1, 3))
    feats = tuple(tuple(round(float(x), 6) for x in rng.normal(size=dim)) for _ in range(n))
    return Graph(n, edges, edge_weights=weights, node_features=feats)


MALFORMED_LINES = [
    "this is not json",
    '{"id": null}',
    '{"id": "%d"}',
    '{"id": %d, "graph": {"num_nodes": "three", "edges": []}}',
    '{"id": %d, "graph": {"num_nodes": 2, "edges": [[0, 5]]}}',
    '{"id": %d}',
]


def generate_fixtures(path: str, soak: int = 1000, seed: int = 2024) -> int:
    """Write the conformance fixture file; returns the number of entries."""
    rng = np.random.default_rng(seed)
    entries = []
    request_id = 0
    malformed_cursor = 0
    for i in range(soak):
        if i and i % 97 == 0:
            template = MALFORMED_LINES[malformed_cursor % len(MALFORMED_LINES)]
            malformed_cursor += 1
            line = template % request_id if "%d" in template else template
            entries.append({"request": line, "expect_error": True})
            continue
        request_id += 1
        g = _random_graph(rng)
        request = json.dumps({"id": request_id, "graph": graph_to_obj(g)},
                             separators=(",", ":"))
        response = json.dumps({"id": request_id, "scores": toy_scores_for_graph(g)},
                              separators=(",", ":"))
        entries.append({"request": request, "expect": response})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"rule": TOY_RULE_VERSION, "entries": len(entries)}) + "\n")
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")
    return len(entries)


def load_fixtures(path: str) -> tuple[dict, list[dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = json.loads(lines[0])
    return header, [json.loads(line) for line in lines[1:] if line]


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "conformance.jsonl"
    count = generate_fixtures(target)
    print(f"wrote {count} fixture entries to {target}")
