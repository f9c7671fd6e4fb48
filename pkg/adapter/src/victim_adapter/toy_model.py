"""Reference toy model for protocol conformance testing.

Implements "toy-degree-classifier-v1" exactly as the conformance kit defines
it, operand by operand, so replies are reproducible bit-for-bit:

    n = node count, m = undirected edge count,
    s = sum of node labels, or the row-wise sum of all feature entries,
    w = sum of undirected edge weights (m when unweighted),
    logits = [0.07 * n - 0.011 * w, 0.05 * m + 0.003 * s], softmax in float64.
"""

from __future__ import annotations

import math

from .adapter import ModelInput


def load(weights_path: str | None = None):
    """Model factory; the toy model carries no weights."""
    return score


def score(inputs: ModelInput) -> list[float]:
    n = inputs.num_nodes
    m = len(inputs.undirected_edges)
    if inputs.node_labels is not None:
        label_sum = float(sum(inputs.node_labels))
    elif inputs.node_features is not None:
        label_sum = float(sum(sum(row) for row in inputs.node_features))
    else:
        label_sum = 0.0
    if inputs.undirected_weights is not None:
        weight_sum = float(sum(inputs.undirected_weights))
    else:
        weight_sum = float(m)
    logit0 = 0.07 * n - 0.011 * weight_sum
    logit1 = 0.05 * m + 0.003 * label_sum
    peak = max(logit0, logit1)
    e0 = math.exp(logit0 - peak)
    e1 = math.exp(logit1 - peak)
    total = e0 + e1
    return [e0 / total, e1 / total]
