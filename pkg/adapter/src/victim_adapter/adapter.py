"""Serve any graph classifier behind the newline-delimited JSON victim protocol.

Requests look like {"id": int, "graph": {...}} with the graph in the canonical
schema (num_nodes, edges, optional edge_weights, node_labels xor
node_features). Replies echo the id with either "scores" or "error"; a bad
request never stops the serving loop. One request is processed at a time, so
responses are never reordered.
"""

from __future__ import annotations

import importlib
import json
import math
import socket
import sys
from dataclasses import dataclass
from typing import Callable, Sequence


class ModelLoadError(RuntimeError):
    """The wrapped model could not be constructed at startup."""


class SchemaError(ValueError):
    """A request graph does not follow the canonical schema."""


@dataclass
class ModelInput:
    """Framework-neutral graph view handed to the wrapped model.

    Node order follows the request; undirected edges are also expanded to
    both directions for frameworks that want directed edge lists, with
    weights aligned to both layouts.
    """

    num_nodes: int
    undirected_edges: list[tuple[int, int]]
    directed_edges: list[tuple[int, int]]
    undirected_weights: list[float] | None
    directed_weights: list[float] | None
    node_labels: list[int] | None
    node_features: list[list[float]] | None
    one_hot: list[list[float]] | None  # labels one-hot encoded, when present


Model = Callable[[ModelInput], Sequence[float]]


@dataclass
class AdapterConfig:
    loader: str                     # "module.path:attribute" returning the model factory
    weights_path: str | None = None
    interpretation: str = "probabilities"  # or "logits"
    tcp_port: int | None = None     # None means stdio
    host: str = "127.0.0.1"
    timeout: float | None = None

    def __post_init__(self) -> None:
        if self.interpretation not in ("probabilities", "logits"):
            raise ValueError("interpretation must be 'probabilities' or 'logits'")


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def _is_int(x: object) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x: object) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def convert_graph(obj: object) -> ModelInput:
    """Decode one canonical graph object into a ModelInput."""
    _expect(isinstance(obj, dict), "graph must be an object")
    assert isinstance(obj, dict)
    _expect(_is_int(obj.get("num_nodes")), "num_nodes must be an integer")
    n = obj["num_nodes"]
    _expect(n >= 0, "num_nodes must be non-negative")

    edges_obj = obj.get("edges", [])
    _expect(isinstance(edges_obj, list), "edges must be an array")
    undirected: list[tuple[int, int]] = []
    for i, pair in enumerate(edges_obj):
        _expect(isinstance(pair, list) and len(pair) == 2, f"edges[{i}] must be [u, v]")
        u, v = pair
        _expect(_is_int(u) and _is_int(v), f"edges[{i}] endpoints must be integers")
        _expect(0 <= u < n and 0 <= v < n, f"edges[{i}] endpoint out of range")
        _expect(u != v, f"edges[{i}] is a self-loop")
        undirected.append((u, v))

    und_weights = None
    if "edge_weights" in obj:
        w_obj = obj["edge_weights"]
        _expect(isinstance(w_obj, list) and len(w_obj) == len(undirected),
                "edge_weights must align with edges")
        _expect(all(_is_num(x) for x in w_obj), "edge_weights must be numbers")
        und_weights = [float(x) for x in w_obj]

    _expect(not ("node_labels" in obj and "node_features" in obj),
            "node_labels and node_features are mutually exclusive")
    labels = None
    features = None
    one_hot = None
    if "node_labels" in obj:
        l_obj = obj["node_labels"]
        _expect(isinstance(l_obj, list) and len(l_obj) == n,
                "node_labels must list one label per node")
        _expect(all(_is_int(x) for x in l_obj), "node_labels must be integers")
        labels = list(l_obj)
        if labels:
            _expect(min(labels) >= 0, "node labels must be non-negative")
            width = max(labels) + 1
            one_hot = [[1.0 if label == c else 0.0 for c in range(width)]
                       for label in labels]
    if "node_features" in obj:
        f_obj = obj["node_features"]
        _expect(isinstance(f_obj, list) and len(f_obj) == n,
                "node_features must list one row per node")
        rows = []
        for i, row in enumerate(f_obj):
            _expect(isinstance(row, list) and all(_is_num(x) for x in row),
                    f"node_features[{i}] must be an array of numbers")
            rows.append([float(x) for x in row])
        _expect(len({len(r) for r in rows}) <= 1, "feature rows must share one length")
        features = rows

    directed = []
    dir_weights = [] if und_weights is not None else None
    for i, (u, v) in enumerate(undirected):
        directed.append((u, v))
        directed.append((v, u))
        if dir_weights is not None:
            dir_weights.extend([und_weights[i], und_weights[i]])

    return ModelInput(
        num_nodes=n,
        undirected_edges=undirected,
        directed_edges=directed,
        undirected_weights=und_weights,
        directed_weights=dir_weights,
        node_labels=labels,
        node_features=features,
        one_hot=one_hot,
    )


def load_model(cfg: AdapterConfig) -> Model:
    module_name, _, attr = cfg.loader.partition(":")
    if not module_name or not attr:
        raise ModelLoadError(f"loader must look like 'module:attribute', got {cfg.loader!r}")
    try:
        module = importlib.import_module(module_name)
        factory = getattr(module, attr)
        model = factory(cfg.weights_path)
    except ModelLoadError:
        raise
    except Exception as exc:
        raise ModelLoadError(f"could not load {cfg.loader!r}: {exc}") from exc
    if not callable(model):
        raise ModelLoadError(f"loader {cfg.loader!r} did not return a callable model")
    return model


def _softmax(values: list[float]) -> list[float]:
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def _handle_line(line: str, model: Model, interpretation: str) -> str:
    request_id = None
    try:
        obj = json.loads(line)
        if isinstance(obj, dict):
            request_id = obj.get("id")
        if not isinstance(obj, dict) or not _is_int(obj.get("id")):
            raise SchemaError("request must carry an integer id")
        if "graph" not in obj:
            raise SchemaError("request must carry a graph")
        inputs = convert_graph(obj["graph"])
        raw = [float(x) for x in model(inputs)]
        if not raw or any(not math.isfinite(x) for x in raw):
            raise ValueError(f"model produced invalid scores {raw!r}")
        scores = _softmax(raw) if interpretation == "logits" else raw
        reply = {"id": request_id, "scores": scores}
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error reply
        reply = {"id": request_id, "error": str(exc)}
    return json.dumps(reply, separators=(",", ":"))


def serve_streams(model: Model, interpretation: str, in_stream, out_stream) -> None:
    for raw in in_stream:
        line = raw.strip()
        if not line:
            continue
        out_stream.write(_handle_line(line, model, interpretation) + "\n")
        out_stream.flush()


def serve(cfg: AdapterConfig, max_connections: int | None = None) -> None:
    """Run until EOF (stdio) or forever (TCP); per-request errors are replied."""
    model = load_model(cfg)
    if cfg.tcp_port is None:
        serve_streams(model, cfg.interpretation, sys.stdin, sys.stdout)
        return
    server = socket.create_server((cfg.host, cfg.tcp_port))
    served = 0
    try:
        while max_connections is None or served < max_connections:
            conn, _ = server.accept()
            with conn, conn.makefile("r", encoding="utf-8") as reader, \
                    conn.makefile("w", encoding="utf-8") as writer:
                serve_streams(model, cfg.interpretation, reader, writer)
            served += 1
    finally:
        server.close()
