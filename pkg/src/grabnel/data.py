"""Dataset generation, TUDataset-format ingestion, and the canonical graph JSON."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, connected_components


class GenerationFailure(RuntimeError):
    """A random component could not be connected within the retry bound."""


class ParseError(ValueError):
    def __init__(self, path: str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class InconsistentIndex(ValueError):
    """An index file references a node or graph that does not exist."""


class DecodeError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Split:
    train: list[int] = field(default_factory=list)
    val: list[int] = field(default_factory=list)
    test: list[int] = field(default_factory=list)


@dataclass
class LabeledDataset:
    """Graphs with contiguous class labels and disjoint train/val/test splits.

    ``label_values[c]`` is the original label value behind class index c (for
    generated component-count data this is the component count itself).
    """

    graphs: list[Graph]
    labels: list[int]
    num_classes: int
    label_values: list = field(default_factory=list)
    split: Split = field(default_factory=Split)

    def __post_init__(self) -> None:
        if len(self.graphs) != len(self.labels):
            raise ValueError("labels must align with graphs")
        if any(not (0 <= y < self.num_classes) for y in self.labels):
            raise ValueError("label out of range")
        if not self.label_values:
            self.label_values = list(range(self.num_classes))
        indices = self.split.train + self.split.val + self.split.test
        if len(set(indices)) != len(indices):
            raise ValueError("splits must be disjoint")
        if any(not (0 <= i < len(self.graphs)) for i in indices):
            raise ValueError("split index out of range")


def make_split(size: int, fractions: tuple[float, float, float] = (2 / 3, 1 / 6, 1 / 6)) -> Split:
    n_train = int(round(size * fractions[0]))
    n_val = int(round(size * fractions[1]))
    idx = list(range(size))
    return Split(train=idx[:n_train], val=idx[n_train:n_train + n_val], test=idx[n_train + n_val:])


# ---------------------------------------------------------------------------
# Component-count dataset


@dataclass
class ERGenConfig:
    min_nodes: int = 15
    max_nodes: int = 20
    component_range: tuple[int, ...] = (1, 2, 3)
    edge_probability: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.min_nodes > self.max_nodes:
            raise ValueError("min_nodes must not exceed max_nodes")
        if not (0 < self.edge_probability < 1):
            raise ValueError("edge_probability must lie in (0, 1)")


def _partition(rng: np.random.Generator, total: int, parts: int) -> list[int]:
    """Split ``total`` nodes into ``parts`` balanced parts (sizes differ by <= 1).

    Balanced parts keep the per-class component-size ranges disjoint, which is
    what makes the label recoverable from local structure; heavily skewed
    splits would let a two-component graph imitate both other classes.
    """
    if total < 2 * parts:
        raise GenerationFailure(f"cannot split {total} nodes into {parts} parts of size >= 2")
    base = total // parts
    sizes = [base] * parts
    for i in range(total - base * parts):
        sizes[i] += 1
    rng.shuffle(sizes)
    return sizes


def _connected_er_component(rng: np.random.Generator, size: int, p: float,
                            offset: int) -> list[tuple[int, int]]:
    pairs = [(offset + a, offset + b) for a in range(size) for b in range(a + 1, size)]
    present = {e for e in pairs if rng.random() < p}
    # Repair pass: add random absent edges until the component is connected.
    limit = 50 + 10 * size * size
    for _ in range(limit):
        if _is_connected(size, present, offset):
            return sorted(present)
        absent = [e for e in pairs if e not in present]
        if not absent:
            raise GenerationFailure(f"complete component of size {size} still disconnected")
        present.add(absent[int(rng.integers(len(absent)))])
    raise GenerationFailure(f"could not connect component of size {size} within {limit} tries")


def _is_connected(size: int, edges: set[tuple[int, int]], offset: int) -> bool:
    if size <= 1:
        return True
    adj: dict[int, list[int]] = {offset + i: [] for i in range(size)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {offset}
    stack = [offset]
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == size


def generate_er_dataset(cfg: ERGenConfig, size: int,
                        split_fractions: tuple[float, float, float] = (2 / 3, 1 / 6, 1 / 6)) -> LabeledDataset:
    """Random graphs whose class is their connected-component count.

    Each sample draws a total node count in [min_nodes, max_nodes] and a
    component count from ``component_range``, splits the nodes uniformly into
    parts of size >= 2, and fills each part with an Erdos-Renyi graph repaired
    to be connected. All node labels are the same single value.
    """
    if size <= 0:
        raise ValueError("size must be positive")
    rng = np.random.default_rng(cfg.seed)
    values = sorted(cfg.component_range)
    graphs: list[Graph] = []
    labels: list[int] = []
    for _ in range(size):
        n = int(rng.integers(cfg.min_nodes, cfg.max_nodes + 1))
        k = values[int(rng.integers(len(values)))]
        edges: list[tuple[int, int]] = []
        offset = 0
        for part in _partition(rng, n, k):
            edges.extend(_connected_er_component(rng, part, cfg.edge_probability, offset))
            offset += part
        g = Graph(num_nodes=n, edges=tuple(edges), node_labels=(0,) * n)
        assert connected_components(g) == k
        graphs.append(g)
        labels.append(values.index(k))
    return LabeledDataset(
        graphs=graphs,
        labels=labels,
        num_classes=len(values),
        label_values=list(values),
        split=make_split(size, split_fractions),
    )


# ---------------------------------------------------------------------------
# TUDataset text format


def _read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def _parse_int(path: str, lineno: int, text: str, minimum: int | None = None) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise ParseError(path, lineno, f"expected integer, got {text.strip()!r}") from None
    if minimum is not None and value < minimum:
        raise InconsistentIndex(f"{path}:{lineno}: index {value} below {minimum} (format is 1-indexed)")
    return value


def parse_tudataset(dir_path: str) -> LabeledDataset:
    """Parse the community-standard text layout: DS_A.txt, DS_graph_indicator.txt,
    DS_graph_labels.txt and the optional node/edge label and attribute files.
    """
    names = [f for f in os.listdir(dir_path) if f.endswith("_A.txt")]
    if not names:
        raise ParseError(dir_path, 0, "no *_A.txt edge file found")
    prefix = names[0][: -len("_A.txt")]

    def fpath(suffix: str) -> str:
        return os.path.join(dir_path, f"{prefix}_{suffix}.txt")

    indicator_path = fpath("graph_indicator")
    node_graph: list[int] = []
    for i, line in enumerate(_read_lines(indicator_path), start=1):
        if line.strip():
            node_graph.append(_parse_int(indicator_path, i, line, minimum=1))
    num_nodes_total = len(node_graph)
    num_graphs = max(node_graph, default=0)
    if sorted(set(node_graph)) != list(range(1, num_graphs + 1)):
        raise InconsistentIndex(f"{indicator_path}: graph ids are not contiguous 1..{num_graphs}")

    # Local (graph-wise, 0-based) index of each global node id.
    local_index: list[int] = []
    counts = [0] * (num_graphs + 1)
    for gid in node_graph:
        local_index.append(counts[gid])
        counts[gid] += 1
    graph_sizes = counts[1:]

    labels_path = fpath("graph_labels")
    raw_labels: list[int] = []
    for i, line in enumerate(_read_lines(labels_path), start=1):
        if line.strip():
            raw_labels.append(_parse_int(labels_path, i, line))
    if len(raw_labels) != num_graphs:
        raise InconsistentIndex(
            f"{labels_path}: {len(raw_labels)} labels for {num_graphs} graphs")

    edges_path = fpath("A")
    edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(num_graphs)]
    edge_values: list[dict[tuple[int, int], float]] = [dict() for _ in range(num_graphs)]
    edge_attr_lines = None
    attr_path = fpath("edge_attributes")
    if os.path.exists(attr_path):
        edge_attr_lines = _read_lines(attr_path)
    for i, line in enumerate(_read_lines(edges_path), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(edges_path, i, f"expected 'i, j', got {line!r}")
        a = _parse_int(edges_path, i, parts[0], minimum=1)
        b = _parse_int(edges_path, i, parts[1], minimum=1)
        if a > num_nodes_total or b > num_nodes_total:
            raise InconsistentIndex(f"{edges_path}:{i}: node id beyond indicator range")
        ga, gb = node_graph[a - 1], node_graph[b - 1]
        if ga != gb:
            raise InconsistentIndex(f"{edges_path}:{i}: edge crosses graphs {ga} and {gb}")
        if a == b:
            raise ParseError(edges_path, i, "self-loop")
        u, v = sorted((local_index[a - 1], local_index[b - 1]))
        edge_sets[ga - 1].add((u, v))
        if edge_attr_lines is not None and (u, v) not in edge_values[ga - 1]:
            try:
                row = [float(x) for x in edge_attr_lines[i - 1].split(",")]
            except (IndexError, ValueError):
                raise ParseError(attr_path, i, "bad edge attribute line") from None
            if len(row) == 1:
                edge_values[ga - 1][(u, v)] = row[0]

    node_labels = None
    nl_path = fpath("node_labels")
    if os.path.exists(nl_path):
        node_labels = []
        for i, line in enumerate(_read_lines(nl_path), start=1):
            if line.strip():
                node_labels.append(_parse_int(nl_path, i, line))
        if len(node_labels) != num_nodes_total:
            raise InconsistentIndex(f"{nl_path}: {len(node_labels)} labels for {num_nodes_total} nodes")
        remap = {v: i for i, v in enumerate(sorted(set(node_labels)))}
        node_labels = [remap[v] for v in node_labels]

    node_attrs = None
    na_path = fpath("node_attributes")
    if os.path.exists(na_path):
        node_attrs = []
        for i, line in enumerate(_read_lines(na_path), start=1):
            if not line.strip():
                continue
            try:
                node_attrs.append(tuple(float(x) for x in line.split(",")))
            except ValueError:
                raise ParseError(na_path, i, f"bad attribute line {line!r}") from None
        if len(node_attrs) != num_nodes_total:
            raise InconsistentIndex(f"{na_path}: {len(node_attrs)} rows for {num_nodes_total} nodes")

    graphs: list[Graph] = []
    per_graph_nodes: list[list[int]] = [[] for _ in range(num_graphs)]
    for global_id, gid in enumerate(node_graph):
        per_graph_nodes[gid - 1].append(global_id)
    for gi in range(num_graphs):
        size = graph_sizes[gi]
        edges = tuple(sorted(edge_sets[gi]))
        weights = None
        if edge_attr_lines is not None and len(edge_values[gi]) == len(edges):
            weights = tuple(edge_values[gi][e] for e in edges)
        labels_g = None
        feats_g = None
        if node_attrs is not None:
            feats_g = tuple(node_attrs[i] for i in per_graph_nodes[gi])
        elif node_labels is not None:
            labels_g = tuple(node_labels[i] for i in per_graph_nodes[gi])
        else:
            labels_g = (0,) * size
        graphs.append(Graph(num_nodes=size, edges=edges, edge_weights=weights,
                            node_labels=labels_g, node_features=feats_g))

    class_values = sorted(set(raw_labels))
    remap = {v: i for i, v in enumerate(class_values)}
    return LabeledDataset(
        graphs=graphs,
        labels=[remap[v] for v in raw_labels],
        num_classes=len(class_values),
        label_values=class_values,
        split=Split(),
    )


def write_tudataset(ds: LabeledDataset, dir_path: str, name: str) -> None:
    """Emit a dataset in the TUDataset text layout (test fixture round-trips)."""
    os.makedirs(dir_path, exist_ok=True)

    def out(suffix: str, lines: list[str]) -> None:
        with open(os.path.join(dir_path, f"{name}_{suffix}.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))

    indicator: list[str] = []
    edges: list[str] = []
    node_labels: list[str] = []
    offset = 0
    any_labels = any(g.node_labels is not None for g in ds.graphs)
    for gi, g in enumerate(ds.graphs, start=1):
        indicator.extend([str(gi)] * g.num_nodes)
        for u, v in g.edges:
            edges.append(f"{offset + u + 1}, {offset + v + 1}")
            edges.append(f"{offset + v + 1}, {offset + u + 1}")
        if any_labels:
            node_labels.extend(str(x) for x in (g.node_labels or (0,) * g.num_nodes))
        offset += g.num_nodes
    out("A", edges)
    out("graph_indicator", indicator)
    out("graph_labels", [str(ds.label_values[y]) for y in ds.labels])
    if any_labels:
        out("node_labels", node_labels)


# ---------------------------------------------------------------------------
# Canonical graph JSON


def graph_to_obj(g: Graph) -> dict:
    obj: dict = {"num_nodes": g.num_nodes, "edges": [list(e) for e in g.edges]}
    if g.edge_weights is not None:
        obj["edge_weights"] = list(g.edge_weights)
    if g.node_labels is not None:
        obj["node_labels"] = list(g.node_labels)
    if g.node_features is not None:
        obj["node_features"] = [list(row) for row in g.node_features]
    return obj


def graph_to_json(g: Graph) -> str:
    return json.dumps(graph_to_obj(g), separators=(",", ":"))


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise DecodeError(path, message)


def obj_to_graph(obj: object, path: str = "$") -> Graph:
    _expect(isinstance(obj, dict), path, "expected object")
    assert isinstance(obj, dict)
    unknown = set(obj) - {"num_nodes", "edges", "edge_weights", "node_labels", "node_features"}
    _expect(not unknown, path, f"unknown keys {sorted(unknown)}")
    _expect("num_nodes" in obj, path + ".num_nodes", "missing")
    n = obj["num_nodes"]
    _expect(isinstance(n, int) and not isinstance(n, bool), path + ".num_nodes", "expected integer")
    edges_obj = obj.get("edges", [])
    _expect(isinstance(edges_obj, list), path + ".edges", "expected array")
    edges = []
    for i, pair in enumerate(edges_obj):
        epath = f"{path}.edges[{i}]"
        _expect(isinstance(pair, list) and len(pair) == 2, epath, "expected [u, v]")
        u, v = pair
        _expect(all(isinstance(x, int) and not isinstance(x, bool) for x in (u, v)),
                epath, "endpoints must be integers")
        edges.append((u, v))
    weights = None
    if "edge_weights" in obj:
        w_obj = obj["edge_weights"]
        _expect(isinstance(w_obj, list) and len(w_obj) == len(edges),
                path + ".edge_weights", "must align with edges")
        _expect(all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in w_obj),
                path + ".edge_weights", "weights must be numbers")
        weights = tuple(float(x) for x in w_obj)
    _expect(not ("node_labels" in obj and "node_features" in obj), path,
            "node_labels and node_features are exclusive")
    labels = None
    feats = None
    if "node_labels" in obj:
        l_obj = obj["node_labels"]
        _expect(isinstance(l_obj, list)
                and all(isinstance(x, int) and not isinstance(x, bool) for x in l_obj),
                path + ".node_labels", "expected array of integers")
        labels = tuple(l_obj)
    if "node_features" in obj:
        f_obj = obj["node_features"]
        _expect(isinstance(f_obj, list), path + ".node_features", "expected array")
        rows = []
        for i, row in enumerate(f_obj):
            rpath = f"{path}.node_features[{i}]"
            _expect(isinstance(row, list)
                    and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row),
                    rpath, "expected array of numbers")
            rows.append(tuple(float(x) for x in row))
        feats = tuple(rows)
    try:
        return Graph(num_nodes=n, edges=tuple(edges), edge_weights=weights,
                     node_labels=labels, node_features=feats)
    except ValueError as exc:
        raise DecodeError(path, str(exc)) from None


def json_to_graph(text: str) -> Graph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError("$", f"invalid JSON: {exc}") from None
    return obj_to_graph(obj)


# ---------------------------------------------------------------------------
# Dataset persistence


def save_dataset(ds: LabeledDataset, path: str) -> None:
    obj = {
        "num_classes": ds.num_classes,
        "label_values": ds.label_values,
        "labels": ds.labels,
        "splits": {"train": ds.split.train, "val": ds.split.val, "test": ds.split.test},
        "graphs": [graph_to_obj(g) for g in ds.graphs],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, separators=(",", ":"))


def load_dataset(path: str) -> LabeledDataset:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    splits = obj.get("splits", {})
    return LabeledDataset(
        graphs=[obj_to_graph(go, f"$.graphs[{i}]") for i, go in enumerate(obj["graphs"])],
        labels=list(obj["labels"]),
        num_classes=int(obj["num_classes"]),
        label_values=list(obj.get("label_values", [])),
        split=Split(train=list(splits.get("train", [])), val=list(splits.get("val", [])),
                    test=list(splits.get("test", []))),
    )


def load_any_dataset(path: str) -> LabeledDataset:
    """Load either a dataset JSON file or a TUDataset directory."""
    if os.path.isdir(path):
        return parse_tudataset(path)
    return load_dataset(path)
