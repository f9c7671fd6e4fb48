"""Attack loss, the staged surrogate-guided attack loop, and baseline attackers.

The query budget is split evenly over the edit budget's stages; each stage
searches one-edit perturbations of its base graph (random probes first, then
surrogate-guided proposal batches) and, when exhausted, commits the edit with
the highest observed loss as the next stage's base. Baselines either sample
full-budget edit sequences at random, evolve them genetically against the
true loss, or run the surrogate search jointly over whole edit sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acquisition import (
    AcquisitionConfig,
    CandidateExhausted,
    expected_improvement,
    mutate_perturbation,
    optimise_acquisition,
    sample_random_perturbation,
)
from .graph import (
    AttackMode,
    ConstraintSet,
    Graph,
    InvalidPerturbation,
    Perturbation,
    apply_perturbation,
    check_constraint,
    edit_distance_from_base,
    perturbation_key,
)
from .surrogate import SingularFit, SurrogateConfig, fit, predict_batch
from .victim import VictimResponse, VictimSession
from .wl import ContinuousFeatureCache, DiscreteFeatureCache


class InvalidConfig(ValueError):
    pass


@dataclass
class AttackConfig:
    mode: AttackMode = AttackMode.FLIP
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    budget_ratio: float = 0.03
    query_multiplier: int = 40
    query_cap: int = 20_000
    n_init: int = 50
    targeted: int | None = None
    seed: int = 0
    edit_budget: int | None = None     # overrides the ratio-derived edit count
    query_budget: int | None = None    # overrides multiplier * edits (still capped)
    wl_iterations: int = 1
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    inject_feature_mode: str = "copy"  # zeros | copy | constant
    inject_feature_constant: float = 1.0

    def __post_init__(self) -> None:
        if self.budget_ratio <= 0:
            raise InvalidConfig("budget_ratio must be positive")
        if self.query_multiplier < 1:
            raise InvalidConfig("query_multiplier must be at least 1")
        if self.inject_feature_mode not in ("zeros", "copy", "constant"):
            raise InvalidConfig(f"unknown inject_feature_mode {self.inject_feature_mode!r}")


def resolve_budgets(cfg: AttackConfig, g: Graph) -> tuple[int, int]:
    """Edit budget and query budget for one graph; the query cap always binds."""
    edits = cfg.edit_budget if cfg.edit_budget is not None \
        else math.floor(cfg.budget_ratio * g.num_nodes ** 2)
    queries = cfg.query_budget if cfg.query_budget is not None \
        else cfg.query_multiplier * edits
    queries = min(queries, cfg.query_cap)
    if edits < 1:
        raise InvalidConfig(f"edit budget {edits} < 1 (graph too small for ratio)")
    if queries < edits:
        raise InvalidConfig(f"query budget {queries} below edit budget {edits}")
    return edits, queries


def attack_loss(resp: VictimResponse, label: int, target: int | None = None) -> float:
    """Log-score margin; positive exactly when the attack has succeeded."""
    scores = np.maximum(np.asarray(resp.class_scores, dtype=float), 1e-12)
    logs = np.log(scores)
    if target is not None:
        if target == label:
            raise ValueError("target class must differ from the true label")
        return float(logs[target] - logs[label])
    others = np.delete(logs, label)
    return float(others.max() - logs[label])


# ---------------------------------------------------------------------------
# Traces and results


@dataclass
class QueryRecord:
    stage: int
    edits: tuple[Perturbation, ...]   # relative to the stage base graph
    loss: float
    cumulative_queries: int


@dataclass
class AttackTrace:
    records: list[QueryRecord] = field(default_factory=list)
    stage_edits: list[Perturbation] = field(default_factory=list)
    stage_bases: list[Graph] = field(default_factory=list)

    def best_loss(self) -> float:
        return max((r.loss for r in self.records), default=float("-inf"))


@dataclass
class AttackResult:
    success: bool
    adversarial: Graph | None
    net_edits: int | None
    queries_used: int
    trace: AttackTrace

    @property
    def loss_curve(self) -> list[float]:
        return [r.loss for r in self.trace.records]


# ---------------------------------------------------------------------------
# Shared helpers


def _inject_feature_fn(cfg: AttackConfig) -> Callable:
    def fn(base: Graph, rng: np.random.Generator):
        if base.node_labels is not None:
            if cfg.inject_feature_mode == "zeros":
                return 0
            if cfg.inject_feature_mode == "constant":
                return int(cfg.inject_feature_constant)
            return base.node_labels[int(rng.integers(base.num_nodes))]
        dim = len(base.node_features[0]) if base.node_features else 1
        if cfg.inject_feature_mode == "zeros":
            return (0.0,) * dim
        if cfg.inject_feature_mode == "constant":
            return (cfg.inject_feature_constant,) * dim
        return base.node_features[int(rng.integers(base.num_nodes))]
    return fn


def _make_feature_cache(cfg: AttackConfig, g: Graph):
    if g.node_labels is not None:
        return DiscreteFeatureCache(cfg.wl_iterations)
    return ContinuousFeatureCache(cfg.wl_iterations,
                                  pooled=cfg.mode is AttackMode.INJECT)


def _apply_sequence(g: Graph, edits: Sequence[Perturbation]) -> Graph:
    for p in edits:
        g = apply_perturbation(g, p)
    return g


def _sample_edit_sequence(base: Graph, count: int, cfg: AttackConfig,
                          constraints: ConstraintSet, rng: np.random.Generator,
                          inject_fn) -> tuple[tuple[Perturbation, ...], Graph]:
    """Up to ``count`` sequential admissible edits (each checked on the graph
    it lands on); shorter only when no admissible edit exists any more."""
    current = base
    edits: list[Perturbation] = []
    for _ in range(count):
        try:
            p = sample_random_perturbation(current, cfg.mode, constraints, rng, inject_fn)
        except CandidateExhausted:
            break
        edits.append(p)
        current = apply_perturbation(current, p)
    if not edits:
        raise CandidateExhausted("no admissible edit sequence from the base graph")
    return tuple(edits), current


class _Ledger:
    """Per-attack query bookkeeping shared by every attacker."""

    def __init__(self, session: VictimSession, label: int, target: int | None,
                 budget: int):
        self.session = session
        self.label = label
        self.target = target
        self.budget = budget
        self.start = session.query_count
        self.trace = AttackTrace()

    @property
    def used(self) -> int:
        return self.session.query_count - self.start

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def query(self, graph: Graph, stage: int, edits: tuple[Perturbation, ...]) -> float:
        loss = attack_loss(self.session.query(graph), self.label, self.target)
        self.trace.records.append(QueryRecord(
            stage=stage, edits=edits, loss=loss, cumulative_queries=self.used))
        return loss

    def result(self, success: bool, adversarial: Graph | None,
               committed: Sequence[Perturbation]) -> AttackResult:
        assert self.used <= self.budget, "query ledger exceeded the budget"
        return AttackResult(
            success=success,
            adversarial=adversarial,
            net_edits=edit_distance_from_base(committed) if success else None,
            queries_used=self.used,
            trace=self.trace,
        )


# ---------------------------------------------------------------------------
# Staged attacks (surrogate-guided and random)


def _staged_attack(session: VictimSession, g: Graph, label: int, cfg: AttackConfig,
                   use_surrogate: bool) -> AttackResult:
    edits_budget, query_budget = resolve_budgets(cfg, g)
    rng = np.random.default_rng(cfg.seed)
    constraints = cfg.constraints.with_base(g)
    inject_fn = _inject_feature_fn(cfg) if cfg.mode is AttackMode.INJECT else None
    cache = _make_feature_cache(cfg, g) if use_surrogate else None
    losses: list[float] = []
    ledger = _Ledger(session, label, cfg.targeted, query_budget)

    stage_budgets = [query_budget // edits_budget] * edits_budget
    stage_budgets[-1] += query_budget % edits_budget

    base = g
    ledger.trace.stage_bases.append(base)
    for stage, stage_budget in enumerate(stage_budgets):
        stage_history: list[tuple[Perturbation, float]] = []
        queried_here: set[Perturbation] = set()
        spent = 0

        def run_query(p: Perturbation) -> float:
            nonlocal spent
            candidate = apply_perturbation(base, p)
            if cache is not None:
                cache.add(candidate)
            loss = ledger.query(candidate, stage, (p,))
            losses.append(loss)
            stage_history.append((p, loss))
            queried_here.add(p)
            spent += 1
            return loss

        def fresh_random() -> Perturbation | None:
            for _ in range(200):
                try:
                    p = sample_random_perturbation(base, cfg.mode, constraints, rng, inject_fn)
                except CandidateExhausted:
                    return None
                if p not in queried_here:
                    return p
            return None

        # Random probes open the stage and count against its budget.
        for _ in range(min(cfg.n_init, stage_budget)):
            try:
                p = sample_random_perturbation(base, cfg.mode, constraints, rng, inject_fn)
            except CandidateExhausted:
                return ledger.result(False, None, ledger.trace.stage_edits)
            if run_query(p) > 0:
                return ledger.result(True, apply_perturbation(base, p),
                                     ledger.trace.stage_edits + [p])

        while spent < stage_budget:
            room = min(cfg.acquisition.batch_query_size, stage_budget - spent)
            batch: list[Perturbation] = []
            posterior = None
            if use_surrogate and len(losses) >= 2:
                try:
                    posterior = fit(cache.matrix(), np.array(losses), cfg.surrogate)
                except (SingularFit, ValueError):
                    posterior = None
            if posterior is not None:
                post = posterior

                def predict_fn(perturbations):
                    rows = np.stack([cache.row(apply_perturbation(base, p))
                                     for p in perturbations])
                    return predict_batch(post, rows)

                proposals = optimise_acquisition(
                    predict_fn, max(losses), base, stage_history,
                    cfg.acquisition, constraints, cfg.mode, rng, inject_fn)
                batch = [c.perturbation for c in proposals
                         if c.perturbation not in queried_here][:room]
            while len(batch) < room:
                p = fresh_random()
                if p is None or p in batch:
                    break
                batch.append(p)
            if not batch:
                break  # candidate space exhausted for this stage
            for p in batch:
                if run_query(p) > 0:
                    return ledger.result(True, apply_perturbation(base, p),
                                         ledger.trace.stage_edits + [p])

        if not stage_history:
            break
        if stage + 1 < len(stage_budgets):
            # Earliest query wins ties, making stage advance replayable.
            best_idx = max(range(len(stage_history)),
                           key=lambda i: (stage_history[i][1], -i))
            winner = stage_history[best_idx][0]
            base = apply_perturbation(base, winner)
            ledger.trace.stage_edits.append(winner)
            ledger.trace.stage_bases.append(base)

    return ledger.result(False, None, ledger.trace.stage_edits)


def grabnel_attack(session: VictimSession, g: Graph, label: int,
                   cfg: AttackConfig) -> AttackResult:
    """Surrogate-guided staged attack (the full method)."""
    return _staged_attack(session, g, label, cfg, use_surrogate=True)


def sequential_random_attack(session: VictimSession, g: Graph, label: int,
                             cfg: AttackConfig) -> AttackResult:
    """Staged attack with random proposals in place of the surrogate search."""
    return _staged_attack(session, g, label, cfg, use_surrogate=False)


# ---------------------------------------------------------------------------
# Full-budget baselines


def random_attack(session: VictimSession, g: Graph, label: int,
                  cfg: AttackConfig) -> AttackResult:
    """Independently samples full-edit-budget sequences and queries each."""
    edits_budget, query_budget = resolve_budgets(cfg, g)
    rng = np.random.default_rng(cfg.seed)
    constraints = cfg.constraints.with_base(g)
    inject_fn = _inject_feature_fn(cfg) if cfg.mode is AttackMode.INJECT else None
    ledger = _Ledger(session, label, cfg.targeted, query_budget)
    ledger.trace.stage_bases.append(g)
    for _ in range(query_budget):
        try:
            edits, candidate = _sample_edit_sequence(
                g, edits_budget, cfg, constraints, rng, inject_fn)
        except CandidateExhausted:
            break
        if ledger.query(candidate, 0, edits) > 0:
            return ledger.result(True, candidate, edits)
    return ledger.result(False, None, [])


def _mutate_sequence(base: Graph, edits: tuple[Perturbation, ...],
                     cfg: AttackConfig, constraints: ConstraintSet,
                     rng: np.random.Generator, inject_fn,
                     attempts: int = 60) -> tuple[tuple[Perturbation, ...], Graph]:
    """Child sequence with one member re-sampled; falls back to fresh random."""
    for _ in range(attempts):
        slot = int(rng.integers(len(edits)))
        current = _apply_sequence(base, edits[:slot])
        try:
            child_edit = mutate_perturbation(edits[slot], current, constraints, rng)
        except CandidateExhausted:
            continue
        child = list(edits)
        child[slot] = child_edit
        try:
            graph = current = apply_perturbation(current, child_edit)
            for later in child[slot + 1:]:
                if not check_constraint(current, later, constraints):
                    raise InvalidPerturbation("downstream edit no longer admissible")
                current = apply_perturbation(current, later)
            return tuple(child), current
        except InvalidPerturbation:
            continue
    return _sample_edit_sequence(base, len(edits), cfg, constraints, rng, inject_fn)


def genetic_attack(session: VictimSession, g: Graph, label: int,
                   cfg: AttackConfig) -> AttackResult:
    """Evolutionary search scored directly by victim queries, with elitism."""
    edits_budget, query_budget = resolve_budgets(cfg, g)
    rng = np.random.default_rng(cfg.seed)
    constraints = cfg.constraints.with_base(g)
    inject_fn = _inject_feature_fn(cfg) if cfg.mode is AttackMode.INJECT else None
    acq = cfg.acquisition
    ledger = _Ledger(session, label, cfg.targeted, query_budget)
    ledger.trace.stage_bases.append(g)

    population: list[tuple[tuple[Perturbation, ...], Graph, float]] = []

    def evaluate(edits: tuple[Perturbation, ...], graph: Graph) -> float | None:
        if ledger.remaining <= 0:
            return None
        return ledger.query(graph, 0, edits)

    try:
        while len(population) < acq.population_fill and ledger.remaining > 0:
            edits, graph = _sample_edit_sequence(
                g, edits_budget, cfg, constraints, rng, inject_fn)
            loss = evaluate(edits, graph)
            if loss is None:
                break
            if loss > 0:
                return ledger.result(True, graph, edits)
            population.append((edits, graph, loss))
    except CandidateExhausted:
        return ledger.result(False, None, [])

    elite = max(population, key=lambda t: t[2], default=None)
    while ledger.remaining > 0 and population:
        ranked = sorted(population, key=lambda t: -t[2])
        parents = ranked[: acq.breeding_top_k]
        per_parent = max(1, round(acq.population_fill / len(parents)))
        children = []
        for edits, _, _ in parents:
            for _ in range(per_parent):
                try:
                    children.append(_mutate_sequence(
                        g, edits, cfg, constraints, rng, inject_fn))
                except CandidateExhausted:
                    continue
        for edits, graph in children:
            loss = evaluate(edits, graph)
            if loss is None:
                break
            if loss > 0:
                return ledger.result(True, graph, edits)
            population.append((edits, graph, loss))
        del population[: max(0, len(population) - acq.population_fill)]
        if elite is not None and population and elite not in population:
            population[0] = elite  # elitism: the best individual never ages out
        if population:
            elite = max(population, key=lambda t: t[2])

    return ledger.result(False, None, [])


def grabnel_no_sequential_attack(session: VictimSession, g: Graph, label: int,
                                 cfg: AttackConfig) -> AttackResult:
    """Surrogate-guided search over whole edit sequences, no staging."""
    edits_budget, query_budget = resolve_budgets(cfg, g)
    rng = np.random.default_rng(cfg.seed)
    constraints = cfg.constraints.with_base(g)
    inject_fn = _inject_feature_fn(cfg) if cfg.mode is AttackMode.INJECT else None
    acq = cfg.acquisition
    cache = _make_feature_cache(cfg, g)
    ledger = _Ledger(session, label, cfg.targeted, query_budget)
    ledger.trace.stage_bases.append(g)

    history: list[tuple[tuple[Perturbation, ...], Graph, float]] = []
    losses: list[float] = []
    queried: set[tuple] = set()

    def seq_key(edits) -> tuple:
        return tuple(perturbation_key(p) for p in edits)

    def run_query(edits: tuple[Perturbation, ...], graph: Graph) -> float:
        cache.add(graph)
        loss = ledger.query(graph, 0, edits)
        losses.append(loss)
        history.append((edits, graph, loss))
        queried.add(seq_key(edits))
        return loss

    try:
        for _ in range(min(cfg.n_init, query_budget)):
            edits, graph = _sample_edit_sequence(
                g, edits_budget, cfg, constraints, rng, inject_fn)
            if run_query(edits, graph) > 0:
                return ledger.result(True, graph, edits)
    except CandidateExhausted:
        return ledger.result(False, None, [])

    while ledger.remaining > 0:
        posterior = None
        if len(losses) >= 2:
            try:
                posterior = fit(cache.matrix(), np.array(losses), cfg.surrogate)
            except (SingularFit, ValueError):
                posterior = None

        proposals: list[tuple[tuple[Perturbation, ...], Graph]] = []
        if posterior is not None:
            evaluated: dict[tuple, tuple[tuple[Perturbation, ...], Graph, float]] = {}
            evals_left = acq.max_acq_evaluations
            best_observed = max(losses)

            def consider(batch: list[tuple[tuple[Perturbation, ...], Graph]]) -> None:
                nonlocal evals_left
                fresh = [(e, gr) for e, gr in batch if seq_key(e) not in evaluated]
                fresh = fresh[:max(evals_left, 0)]
                if not fresh:
                    return
                rows = np.stack([cache.row(gr) for _, gr in fresh])
                means, variances = predict_batch(posterior, rows)
                evals_left -= len(fresh)
                values = np.atleast_1d(expected_improvement(means, variances, best_observed))
                for (e, gr), val in zip(fresh, values):
                    evaluated[seq_key(e)] = (e, gr, float(val))

            ranked = sorted(history, key=lambda t: -t[2])[: acq.mutation_pool_from_top_k]
            seed_pop = []
            for i in range(acq.population_fill):
                parent = ranked[i % len(ranked)][0]
                try:
                    seed_pop.append(_mutate_sequence(
                        g, parent, cfg, constraints, rng, inject_fn))
                except CandidateExhausted:
                    continue
            consider(seed_pop)
            population = list(seed_pop)
            for _ in range(acq.evolution_rounds):
                if evals_left <= 0 or not population:
                    break
                pop_ranked = sorted(
                    (evaluated[seq_key(e)] for e, _ in population
                     if seq_key(e) in evaluated),
                    key=lambda t: -t[2])
                if not pop_ranked:
                    break
                children = []
                for parent_edits, _, _ in pop_ranked[: acq.breeding_top_k]:
                    for _ in range(max(1, round(acq.population_fill / acq.breeding_top_k))):
                        try:
                            children.append(_mutate_sequence(
                                g, parent_edits, cfg, constraints, rng, inject_fn))
                        except CandidateExhausted:
                            continue
                consider(children)
                population.extend(children)
                del population[: max(0, len(population) - acq.population_fill)]
            top = sorted(evaluated.values(), key=lambda t: (-t[2], seq_key(t[0])))
            proposals = [(e, gr) for e, gr, _ in top
                         if seq_key(e) not in queried][: acq.batch_query_size]
        for _ in range(200):
            if len(proposals) >= acq.batch_query_size:
                break
            try:
                edits, graph = _sample_edit_sequence(
                    g, edits_budget, cfg, constraints, rng, inject_fn)
            except CandidateExhausted:
                break
            if seq_key(edits) not in queried:
                proposals.append((edits, graph))
        if not proposals:
            break
        for edits, graph in proposals[: ledger.remaining]:
            if run_query(edits, graph) > 0:
                return ledger.result(True, graph, edits)

    return ledger.result(False, None, [])


ATTACKERS: dict[str, Callable] = {
    "grabnel": grabnel_attack,
    "random": random_attack,
    "sequential-random": sequential_random_attack,
    "genetic": genetic_attack,
    "grabnel-no-sequential": grabnel_no_sequential_attack,
}
