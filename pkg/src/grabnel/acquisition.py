"""Expected-improvement acquisition and its evolutionary optimiser.

The optimiser searches one-edit perturbations of the current base graph. The
population is seeded by mutating the best queried edits of the current stage
(or with 100 random edits when nothing has been queried yet), then evolved by
mutating the fittest members while popping the oldest, and finally the best
unique candidates seen anywhere during the search are returned for querying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .graph import (
    AttackMode,
    ConstraintSet,
    Flip,
    Graph,
    Inject,
    Perturbation,
    Rewire,
    Swap,
    check_constraint,
    perturbation_key,
    validate_perturbation,
)

_FALLBACK_RANDOM = 100  # population size when no queries exist yet
_SAMPLE_ATTEMPTS = 400


class CandidateExhausted(RuntimeError):
    """No admissible candidate was found within the attempt bound."""


class MutationExhausted(CandidateExhausted):
    """No admissible child of the given parent was found within the bound."""


@dataclass
class AcquisitionConfig:
    max_acq_evaluations: int = 500
    init_random_candidates: int = 50
    mutation_pool_from_top_k: int = 3
    population_fill: int = 50
    evolution_rounds: int = 10
    batch_query_size: int = 5
    breeding_top_k: int = 3

    def __post_init__(self) -> None:
        values = [self.max_acq_evaluations, self.init_random_candidates,
                  self.mutation_pool_from_top_k, self.population_fill,
                  self.evolution_rounds, self.batch_query_size, self.breeding_top_k]
        if any(v <= 0 for v in values):
            raise ValueError("acquisition config values must be positive")
        if self.batch_query_size > self.population_fill:
            raise ValueError("batch_query_size must not exceed population_fill")


@dataclass
class Candidate:
    perturbation: Perturbation
    acquisition_value: float
    birth_round: int

    def sort_key(self) -> tuple:
        return (-self.acquisition_value, self.birth_round, perturbation_key(self.perturbation))


def expected_improvement(mean, variance, best_observed):
    """EI for maximisation; accepts scalars or arrays, variance may be 0."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sigma = np.sqrt(np.maximum(variance, 0.0))
    gain = mean - best_observed
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, gain / np.where(sigma > 0, sigma, 1.0), 0.0)
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei = np.where(sigma > 0, gain * ndtr(z) + sigma * pdf, np.maximum(gain, 0.0))
    return float(ei) if ei.ndim == 0 else ei


# ---------------------------------------------------------------------------
# Candidate generation


def sample_random_perturbation(
    base: Graph,
    mode: AttackMode,
    constraints: ConstraintSet,
    rng: np.random.Generator,
    inject_features: Callable[[Graph, np.random.Generator], int | tuple[float, ...]] | None = None,
    attempts: int = _SAMPLE_ATTEMPTS,
) -> Perturbation:
    """One admissible random edit of the base graph."""
    n = base.num_nodes
    for _ in range(attempts):
        if mode is AttackMode.FLIP:
            if n < 2:
                raise CandidateExhausted("flip needs at least two nodes")
            u, v = rng.choice(n, size=2, replace=False)
            p: Perturbation = Flip(int(u), int(v))
        elif mode is AttackMode.REWIRE:
            if not base.edges or n < 3:
                raise CandidateExhausted("rewire needs an edge and a third node")
            u, v = base.edges[int(rng.integers(base.num_edges))]
            if rng.random() < 0.5:
                u, v = v, u
            s = int(rng.integers(n))
            if s in (u, v) or base.has_edge(u, s):
                continue
            p = Rewire(int(u), int(v), s)
        elif mode is AttackMode.SWAP:
            if not base.edges or n < 3:
                raise CandidateExhausted("swap needs an edge and a third node")
            u, v = base.edges[int(rng.integers(base.num_edges))]
            if rng.random() < 0.5:
                u, v = v, u
            s = int(rng.integers(n))
            if s in (u, v) or base.weight(u, s) == base.weight(u, v):
                continue
            p = Swap(int(u), int(v), s)
        elif mode is AttackMode.INJECT:
            if inject_features is None:
                raise ValueError("inject mode needs an inject_features policy")
            cap = constraints.max_edges_per_injected_node
            if cap is None:
                cap = max(1, round(2 * base.num_edges / n)) if n else 1
            cap = min(cap, n)
            count = int(rng.integers(1, cap + 1))
            conns = tuple(int(c) for c in rng.choice(n, size=count, replace=False))
            p = Inject(features=inject_features(base, rng), connections=conns)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        validate_perturbation(base, p)
        if check_constraint(base, p, constraints):
            return p
    raise CandidateExhausted(f"no admissible {mode.value} candidate in {attempts} attempts")


def mutate_perturbation(
    parent: Perturbation,
    base: Graph,
    constraints: ConstraintSet,
    rng: np.random.Generator,
    attempts: int = _SAMPLE_ATTEMPTS,
) -> Perturbation:
    """Admissible child sharing all but one end node with the parent.

    Flips keep one endpoint and re-draw the other; rewires and swaps re-draw
    the free end; injections re-draw one connection endpoint.
    """
    n = base.num_nodes
    for _ in range(attempts):
        if isinstance(parent, Flip):
            keep = parent.u if rng.random() < 0.5 else parent.v
            w = int(rng.integers(n))
            if w in (parent.u, parent.v):
                continue
            child: Perturbation = Flip(keep, w)
        elif isinstance(parent, Rewire):
            s = int(rng.integers(n))
            if s in (parent.u, parent.v, parent.s) or base.has_edge(parent.u, s):
                continue
            child = Rewire(parent.u, parent.v, s)
        elif isinstance(parent, Swap):
            s = int(rng.integers(n))
            if s in (parent.u, parent.v, parent.s):
                continue
            if base.weight(parent.u, s) == base.weight(parent.u, parent.v):
                continue
            child = Swap(parent.u, parent.v, s)
        elif isinstance(parent, Inject):
            if not parent.connections or n <= len(parent.connections):
                raise MutationExhausted("no spare endpoint for injection mutation")
            slot = int(rng.integers(len(parent.connections)))
            c = int(rng.integers(n))
            if c in parent.connections:
                continue
            conns = list(parent.connections)
            conns[slot] = c
            child = Inject(features=parent.features, connections=tuple(conns))
        else:
            raise ValueError(f"unknown perturbation {parent!r}")
        try:
            validate_perturbation(base, child)
        except Exception:
            continue
        if check_constraint(base, child, constraints):
            return child
    raise MutationExhausted(f"no admissible child of {parent} in {attempts} attempts")


# ---------------------------------------------------------------------------
# Evolutionary acquisition optimisation


PredictFn = Callable[[Sequence[Perturbation]], tuple[np.ndarray, np.ndarray]]


def optimise_acquisition(
    predict: PredictFn,
    best_observed: float,
    base: Graph,
    stage_history: Sequence[tuple[Perturbation, float]],
    cfg: AcquisitionConfig,
    constraints: ConstraintSet,
    mode: AttackMode,
    rng: np.random.Generator,
    inject_features: Callable[[Graph, np.random.Generator], int | tuple[float, ...]] | None = None,
) -> list[Candidate]:
    """Best unique one-edit candidates by expected improvement.

    ``predict`` maps a batch of perturbations to surrogate (means, variances);
    it is called on at most ``max_acq_evaluations`` distinct candidates.
    """
    evaluated: dict[Perturbation, Candidate] = {}
    evals_left = cfg.max_acq_evaluations

    def random_candidate() -> Perturbation:
        return sample_random_perturbation(base, mode, constraints, rng, inject_features)

    def evaluate(batch: list[Perturbation], birth: int) -> None:
        nonlocal evals_left
        fresh = []
        seen_in_batch = set()
        for p in batch:
            if p not in evaluated and p not in seen_in_batch:
                fresh.append(p)
                seen_in_batch.add(p)
        fresh = fresh[:max(evals_left, 0)]
        if not fresh:
            return
        means, variances = predict(fresh)
        evals_left -= len(fresh)
        values = expected_improvement(means, variances, best_observed)
        values = np.atleast_1d(values)
        for p, v in zip(fresh, values):
            evaluated[p] = Candidate(perturbation=p, acquisition_value=float(v), birth_round=birth)

    # Seed population: mutate the best queried edits, or go random when blind.
    population: list[Perturbation] = []
    if stage_history:
        ranked = sorted(
            range(len(stage_history)),
            key=lambda i: (-stage_history[i][1], i),
        )
        parents = [stage_history[i][0] for i in ranked[: cfg.mutation_pool_from_top_k]]
        for i in range(cfg.population_fill):
            parent = parents[i % len(parents)]
            try:
                population.append(mutate_perturbation(parent, base, constraints, rng))
            except CandidateExhausted:
                try:
                    population.append(random_candidate())
                except CandidateExhausted:
                    break
    else:
        for _ in range(_FALLBACK_RANDOM):
            try:
                population.append(random_candidate())
            except CandidateExhausted:
                break
    evaluate(population, birth=0)

    for round_idx in range(1, cfg.evolution_rounds + 1):
        if evals_left <= 0 or not population:
            break
        ranked_pop = sorted(
            (evaluated[p] for p in dict.fromkeys(population) if p in evaluated),
            key=Candidate.sort_key,
        )
        if not ranked_pop:
            break
        breeders = ranked_pop[: cfg.breeding_top_k]
        per_parent = max(1, round(cfg.population_fill / len(breeders)))
        children: list[Perturbation] = []
        for cand in breeders:
            for _ in range(per_parent):
                try:
                    children.append(mutate_perturbation(cand.perturbation, base, constraints, rng))
                except CandidateExhausted:
                    try:
                        children.append(random_candidate())
                    except CandidateExhausted:
                        break
        evaluate(children, birth=round_idx)
        population.extend(children)
        del population[: max(0, len(population) - cfg.population_fill)]

    assert cfg.max_acq_evaluations - evals_left <= cfg.max_acq_evaluations
    ranked_all = sorted(evaluated.values(), key=Candidate.sort_key)
    return ranked_all[: cfg.batch_query_size]
