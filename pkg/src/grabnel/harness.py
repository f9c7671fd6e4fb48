"""Campaign runner: attack a dataset's eligible test graphs, persist traces,
and compute success-rate curves and adversarial-pattern statistics."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import ATTACKERS, AttackConfig, AttackResult, resolve_budgets
from .data import LabeledDataset, graph_to_obj, load_any_dataset, obj_to_graph
from .graph import (
    Flip,
    Graph,
    Inject,
    Perturbation,
    Rewire,
    Swap,
    bfs_distances,
)
from .victim import (
    InProcessSession,
    SubprocessSession,
    TcpSession,
    VictimSession,
    load_weights,
)


class EmptyInput(ValueError):
    pass


@dataclass
class VictimSpec:
    """Where the victim lives: a weights file, a spawned command, or a TCP peer."""

    weights_path: str | None = None
    command: list[str] | None = None
    tcp: tuple[str, int] | None = None
    interpret: str = "probabilities"
    timeout: float | None = 30.0

    def __post_init__(self) -> None:
        picked = [x is not None for x in (self.weights_path, self.command, self.tcp)]
        if sum(picked) != 1:
            raise ValueError("specify exactly one of weights_path, command, tcp")

    def open(self) -> VictimSession:
        if self.weights_path is not None:
            return InProcessSession(load_weights(self.weights_path))
        if self.command is not None:
            return SubprocessSession(self.command, interpret=self.interpret,
                                     timeout=self.timeout)
        host, port = self.tcp
        return TcpSession(host, port, interpret=self.interpret, timeout=self.timeout)


@dataclass
class Campaign:
    dataset_path: str
    victim: VictimSpec
    attacker: str = "grabnel"
    attack: AttackConfig = field(default_factory=AttackConfig)
    output_dir: str = "campaign-out"
    max_graphs: int | None = None
    normalization: str = "squared"  # squared | nodes | raw
    workers: int = 1

    def __post_init__(self) -> None:
        if self.attacker not in ATTACKERS:
            raise ValueError(f"unknown attacker {self.attacker!r}")
        if self.normalization not in ("squared", "nodes", "raw"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


# ---------------------------------------------------------------------------
# Trace (de)serialisation


def perturbation_to_obj(p: Perturbation) -> dict:
    if isinstance(p, Flip):
        return {"kind": "flip", "u": p.u, "v": p.v}
    if isinstance(p, Rewire):
        return {"kind": "rewire", "u": p.u, "v": p.v, "s": p.s}
    if isinstance(p, Swap):
        return {"kind": "swap", "u": p.u, "v": p.v, "s": p.s}
    features = p.features if isinstance(p.features, int) else list(p.features)
    return {"kind": "inject", "features": features, "connections": list(p.connections)}


def obj_to_perturbation(obj: dict) -> Perturbation:
    kind = obj["kind"]
    if kind == "flip":
        return Flip(obj["u"], obj["v"])
    if kind == "rewire":
        return Rewire(obj["u"], obj["v"], obj["s"])
    if kind == "swap":
        return Swap(obj["u"], obj["v"], obj["s"])
    if kind == "inject":
        feats = obj["features"]
        return Inject(features=feats if isinstance(feats, int) else tuple(feats),
                      connections=tuple(obj["connections"]))
    raise ValueError(f"unknown perturbation kind {kind!r}")


def trace_to_obj(graph_index: int, label: int, result: AttackResult) -> dict:
    return {
        "graph_index": graph_index,
        "label": label,
        "success": result.success,
        "net_edits": result.net_edits,
        "queries_used": result.queries_used,
        "records": [
            {"stage": r.stage, "edits": [perturbation_to_obj(p) for p in r.edits],
             "loss": r.loss, "queries": r.cumulative_queries}
            for r in result.trace.records
        ],
        "stage_edits": [perturbation_to_obj(p) for p in result.trace.stage_edits],
        "stage_bases": [graph_to_obj(g) for g in result.trace.stage_bases],
        "adversarial": graph_to_obj(result.adversarial) if result.adversarial else None,
    }


def persist_trace(obj: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, separators=(",", ":"))


def load_trace(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Success-rate curves


def normalisation_factor(g: Graph, mode: str) -> float:
    if mode == "squared":
        return float(g.num_nodes ** 2)
    if mode == "nodes":
        return float(g.num_nodes)
    return 1.0


def asr_curve(success_queries: list[float | None], budgets: list[float],
              grid_points: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative success rate over a log-spaced grid of normalised queries.

    ``success_queries`` holds, per eligible graph, the normalised query count
    at success (None for failures); ``budgets`` the normalised budget of each.
    The last grid point covers every budget, so the curve ends at the exact
    overall success rate.
    """
    if not budgets:
        raise EmptyInput("no eligible graphs")
    hi = max(budgets)
    grid = np.geomspace(hi / 1000.0, hi, grid_points)
    asr = np.array([
        sum(1 for q in success_queries if q is not None and q <= point)
        for point in grid
    ]) / len(success_queries)
    return grid, asr


def curve_to_csv(grid: np.ndarray, asr: np.ndarray) -> str:
    lines = ["normalized_queries,asr"]
    lines += [f"{repr(float(q))},{repr(float(a))}" for q, a in zip(grid, asr)]
    return "\n".join(lines) + "\n"


def area_under_curve(grid: np.ndarray, asr: np.ndarray) -> float:
    """Trapezoidal AUC over log-queries, normalised to [0, 1]."""
    x = np.log(grid)
    if x[-1] == x[0]:
        return float(asr[-1])
    return float(np.trapezoid(asr, x) / (x[-1] - x[0]))


# ---------------------------------------------------------------------------
# Campaign


def _graph_seed(campaign_seed: int, graph_index: int) -> int:
    return int(np.random.SeedSequence((campaign_seed, graph_index)).generate_state(1)[0])


def _attack_one(campaign: Campaign, ds: LabeledDataset, index: int) -> dict:
    session = campaign.victim.open()
    try:
        cfg = replace(campaign.attack, seed=_graph_seed(campaign.attack.seed, index))
        result = ATTACKERS[campaign.attacker](session, ds.graphs[index],
                                              ds.labels[index], cfg)
        return trace_to_obj(index, ds.labels[index], result)
    finally:
        session.close()


def run_campaign(campaign: Campaign, dataset: LabeledDataset | None = None) -> dict:
    """Attack every originally-correct test graph; write traces, curve, summary."""
    ds = dataset if dataset is not None else load_any_dataset(campaign.dataset_path)
    test_idx = list(ds.split.test) or list(range(len(ds.graphs)))
    os.makedirs(campaign.output_dir, exist_ok=True)

    probe = campaign.victim.open()
    try:
        correct = [i for i in test_idx
                   if probe.query(ds.graphs[i]).predicted_class == ds.labels[i]]
    finally:
        probe.close()
    clean_accuracy = len(correct) / len(test_idx) if test_idx else float("nan")
    eligible = correct[: campaign.max_graphs]

    traces: dict[int, dict] = {}
    errors: dict[int, str] = {}

    def work(index: int) -> None:
        try:
            traces[index] = _attack_one(campaign, ds, index)
        except Exception as exc:  # noqa: BLE001 - per-graph failures are recorded
            errors[index] = f"{type(exc).__name__}: {exc}"

    if campaign.workers > 1:
        with ThreadPoolExecutor(max_workers=campaign.workers) as pool:
            list(pool.map(work, eligible))
    else:
        for index in eligible:
            work(index)

    success_queries: list[float | None] = []
    budgets: list[float] = []
    net_edits: list[int] = []
    total_queries = 0
    for index in sorted(traces):
        obj = traces[index]
        persist_trace(obj, os.path.join(campaign.output_dir, f"trace_{index:05d}.json"))
        norm = normalisation_factor(ds.graphs[index], campaign.normalization)
        _, budget = resolve_budgets(campaign.attack, ds.graphs[index])
        budgets.append(budget / norm)
        success_queries.append(obj["queries_used"] / norm if obj["success"] else None)
        total_queries += obj["queries_used"]
        if obj["success"]:
            net_edits.append(obj["net_edits"])

    summary: dict = {
        "dataset": campaign.dataset_path,
        "attacker": campaign.attacker,
        "test_graphs": len(test_idx),
        "clean_accuracy": clean_accuracy,
        "eligible": len(eligible),
        "attacked": len(traces),
        "errors": {str(k): v for k, v in sorted(errors.items())},
        "successes": sum(1 for q in success_queries if q is not None),
        "total_queries": total_queries,
    }
    if traces:
        grid, asr = asr_curve(success_queries, budgets)
        csv_text = curve_to_csv(grid, asr)
        with open(os.path.join(campaign.output_dir, "asr_curve.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(csv_text)
        summary["final_asr"] = float(asr[-1])
        summary["post_attack_accuracy"] = 1.0 - float(asr[-1])
        summary["auc_log_queries"] = area_under_curve(grid, asr)
        summary["mean_net_edits"] = float(np.mean(net_edits)) if net_edits else None
        summary["median_net_edits"] = float(np.median(net_edits)) if net_edits else None
    with open(os.path.join(campaign.output_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, separators=(",", ":"), sort_keys=True)
    return summary


# ---------------------------------------------------------------------------
# Adversarial-pattern statistics


def _edge_sets(trace: dict) -> tuple[Graph, Graph, set, set]:
    clean = obj_to_graph(trace["stage_bases"][0])
    adversarial = obj_to_graph(trace["adversarial"])
    clean_edges = set(clean.edges)
    adv_edges = set(adversarial.edges)
    return clean, adversarial, adv_edges - clean_edges, clean_edges - adv_edges


def _edge_distance(g: Graph, e: tuple[int, int], f: tuple[int, int]) -> int:
    """Smallest hop count between any endpoint of e and any endpoint of f."""
    best = math.inf
    for a in e:
        if a >= g.num_nodes:
            continue
        dist = bfs_distances(g, a)
        for b in f:
            if b < g.num_nodes and dist[b] >= 0:
                best = min(best, dist[b])
    return int(best) if best is not math.inf else -1


def adversarial_pattern_stats(traces: list[dict]) -> dict:
    """Clustering, endpoint-degree, and add/delete statistics over successes."""
    successes = [t for t in traces if t.get("success") and t.get("adversarial")]
    if not successes:
        raise EmptyInput("no successful traces")

    multi = 0
    clustered = 0
    adv_degrees: list[int] = []
    base_degrees: list[int] = []
    added_total = 0
    deleted_total = 0
    for trace in successes:
        clean, adversarial, added, deleted = _edge_sets(trace)
        changed = sorted(added | deleted)
        added_total += len(added)
        deleted_total += len(deleted)
        degrees = clean.degrees()
        base_degrees.extend(degrees)
        for u, v in changed:
            for x in (u, v):
                if x < clean.num_nodes:
                    adv_degrees.append(degrees[x])
        if len(changed) >= 2:
            multi += 1
            near = []
            for e in changed:
                others = [f for f in changed if f != e]
                dist = min((_edge_distance(clean, e, f) for f in others), default=-1)
                near.append(0 <= dist <= 2 or any(set(e) & set(f) for f in others))
            if all(near):
                clustered += 1

    def describe(values: list[int]) -> dict:
        arr = np.array(values, dtype=float)
        return {"mean": float(arr.mean()), "median": float(np.median(arr)),
                "count": len(values)}

    return {
        "successful_attacks": len(successes),
        "multi_edit_attacks": multi,
        "clustered_fraction": (clustered / multi) if multi else None,
        "adversarial_endpoint_degrees": describe(adv_degrees) if adv_degrees else None,
        "base_degree_distribution": describe(base_degrees) if base_degrees else None,
        "edges_added": added_total,
        "edges_deleted": deleted_total,
        "add_delete_ratio": (added_total / deleted_total) if deleted_total else None,
    }


def load_trace_dir(path: str) -> list[dict]:
    traces = []
    for name in sorted(os.listdir(path)):
        if name.startswith("trace_") and name.endswith(".json"):
            traces.append(load_trace(os.path.join(path, name)))
    return traces


# ---------------------------------------------------------------------------
# Adversarial-graph export


def export_adversarial_graph(trace: dict, out_dir: str) -> dict:
    """Write the adversarial graph plus an edit annotation file for plotting.

    The added/deleted lists partition the symmetric difference of the edge
    sets; reweighted edges and injected node ids cover the rest of the diff.
    """
    if not (trace.get("success") and trace.get("adversarial")):
        raise ValueError("only successful traces carry an adversarial graph")
    clean, adversarial, added, deleted = _edge_sets(trace)
    clean_w = clean.weight_map()
    adv_w = adversarial.weight_map()
    reweighted = [
        [u, v, clean_w[(u, v)], adv_w[(u, v)]]
        for (u, v) in sorted(set(clean.edges) & set(adversarial.edges))
        if clean_w[(u, v)] != adv_w[(u, v)]
    ]
    annotations = {
        "added": [list(e) for e in sorted(added)],
        "deleted": [list(e) for e in sorted(deleted)],
        "reweighted": reweighted,
        "injected_nodes": list(range(clean.num_nodes, adversarial.num_nodes)),
    }
    os.makedirs(out_dir, exist_ok=True)
    index = trace.get("graph_index", 0)
    with open(os.path.join(out_dir, f"adversarial_{index:05d}.json"), "w",
              encoding="utf-8") as fh:
        json.dump(graph_to_obj(adversarial), fh, separators=(",", ":"))
    with open(os.path.join(out_dir, f"edits_{index:05d}.json"), "w",
              encoding="utf-8") as fh:
        json.dump(annotations, fh, separators=(",", ":"))
    return annotations


def replay_annotations(clean: Graph, adversarial: Graph, annotations: dict) -> Graph:
    """Rebuild the adversarial graph from the clean one plus annotations."""
    weights = clean.weight_map()
    weighted = clean.edge_weights is not None or adversarial.edge_weights is not None
    labels = clean.node_labels
    feats = clean.node_features
    num_nodes = clean.num_nodes
    for node in annotations["injected_nodes"]:
        num_nodes = max(num_nodes, node + 1)
        if labels is not None:
            labels = labels + (adversarial.node_labels[node],)
        if feats is not None:
            feats = feats + (adversarial.node_features[node],)
    for u, v in annotations["deleted"]:
        weights.pop((u, v) if u < v else (v, u), None)
    for u, v in annotations["added"]:
        e = (u, v) if u < v else (v, u)
        weights[e] = adversarial.weight_map().get(e, 1.0)
    for u, v, _, new in annotations["reweighted"]:
        weights[(u, v) if u < v else (v, u)] = new
    edges = tuple(sorted(weights))
    return Graph(
        num_nodes=num_nodes,
        edges=edges,
        edge_weights=tuple(weights[e] for e in edges) if weighted else None,
        node_labels=labels,
        node_features=feats,
    )
