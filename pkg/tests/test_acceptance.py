"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The end-to-end criteria run on the component-count task with a single trained
victim shared through session fixtures; the numeric criteria run their
independent oracles at full scale.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import stats as scipy_stats

from grabnel.acquisition import expected_improvement
from grabnel.attack import (
    AttackConfig,
    attack_loss,
    grabnel_attack,
    grabnel_no_sequential_attack,
    random_attack,
    resolve_budgets,
    sequential_random_attack,
)
from grabnel.data import ERGenConfig, generate_er_dataset, save_dataset
from grabnel.graph import (
    AttackMode,
    ConstraintMode,
    ConstraintSet,
    Flip,
    Graph,
    Rewire,
    apply_perturbation,
    check_constraint,
    connected_components,
    two_hop_neighbors,
    validate_perturbation,
)
from grabnel.harness import Campaign, VictimSpec, run_campaign
from grabnel.surrogate import fit, log_evidence
from grabnel.victim import InProcessSession, TrainConfig, VictimResponse, accuracy, \
    save_weights, train_gcn
from grabnel.wl import wl_extract_discrete

from test_surrogate import oracle_normalise, oracle_posterior, random_instance
from test_wl import brute_force_counts, counts_by_string
from util import bfs_k_hop, dfs_component_count, random_graph


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name}: {detail}"


ATTACK_SEEDS = (0, 1, 2)


@pytest.fixture(scope="session")
def er_victim(tmp_path_factory):
    """Dataset, trained victim, eligibility list, and training metrics."""
    root = tmp_path_factory.mktemp("acceptance")
    dataset = generate_er_dataset(ERGenConfig(seed=1, edge_probability=0.4), 1500)
    started = time.monotonic()
    weights = train_gcn(dataset, TrainConfig(seed=0, epochs=120, decay_epoch=80))
    train_seconds = time.monotonic() - started
    val = dataset.split.val
    val_accuracy = accuracy(weights, [dataset.graphs[i] for i in val],
                            [dataset.labels[i] for i in val])
    probe = InProcessSession(weights)
    eligible = [i for i in dataset.split.test
                if probe.query(dataset.graphs[i]).predicted_class == dataset.labels[i]]
    weights_path = os.path.join(str(root), "victim.npz")
    save_weights(weights, weights_path)
    dataset_path = os.path.join(str(root), "dataset.json")
    save_dataset(dataset, dataset_path)
    return {
        "dataset": dataset,
        "weights": weights,
        "weights_path": weights_path,
        "dataset_path": dataset_path,
        "eligible": eligible,
        "val_accuracy": val_accuracy,
        "train_seconds": train_seconds,
    }


def _graph_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, index)).generate_state(1)[0])


def _run_attacker(setup, attacker, indices, seed, **cfg_kw):
    ds, weights = setup["dataset"], setup["weights"]
    constraint = ConstraintSet(mode=ConstraintMode.PRESERVE_COMPONENTS)
    outcomes = []
    for index in indices:
        cfg = AttackConfig(mode=AttackMode.FLIP, constraints=constraint,
                           seed=_graph_seed(seed, index), **cfg_kw)
        result = attacker(InProcessSession(weights), ds.graphs[index],
                          ds.labels[index], cfg)
        outcomes.append(result)
    return outcomes


def _linear_auc(queries, budget, total):
    marks = np.arange(1, budget + 1)
    curve = np.array([sum(1 for q in queries if q is not None and q <= t)
                      for t in marks])
    return float(curve.mean() / total)


class TestEndToEnd:
    def test_er_victim_training(self, er_victim):
        ok = er_victim["val_accuracy"] >= 0.90 and er_victim["train_seconds"] <= 600
        report("er-victim-training", ok,
               f"val_acc={er_victim['val_accuracy']:.3f} "
               f"train={er_victim['train_seconds']:.0f}s (limits: 0.90, 600s)")

    def test_er_attack_ordering(self, er_victim):
        indices = er_victim["eligible"][:100]
        assert len(indices) == 100
        started = time.monotonic()
        per_seed = []
        for seed in ATTACK_SEEDS:
            grabnel = _run_attacker(er_victim, grabnel_attack, indices, seed,
                                    edit_budget=1, query_budget=100, n_init=50)
            rand = _run_attacker(er_victim, random_attack, indices, seed,
                                 edit_budget=1, query_budget=400)
            g100 = sum(r.success for r in grabnel)
            r400 = sum(r.success for r in rand)
            r100 = sum(r.success and r.queries_used <= 100 for r in rand)
            per_seed.append((g100 >= r400 and g100 > r100,
                             f"seed{seed}: G@100={g100} R@400={r400} R@100={r100}"))
        elapsed = time.monotonic() - started
        holds = sum(ok for ok, _ in per_seed)
        detail = "; ".join(d for _, d in per_seed) + f"; runtime={elapsed:.0f}s"
        report("er-attack-ordering", holds >= 2 and elapsed <= 1800, detail)

    def test_ablation_ordering(self, er_victim):
        indices = er_victim["eligible"][:60]
        budget = 40
        per_seed = []
        for seed in ATTACK_SEEDS:
            aucs = {}
            for name, attacker in (("grabnel", grabnel_attack),
                                   ("seqrandom", sequential_random_attack),
                                   ("random", random_attack),
                                   ("nosequential", grabnel_no_sequential_attack)):
                runs = _run_attacker(er_victim, attacker, indices, seed,
                                     edit_budget=1, query_budget=budget, n_init=15)
                queries = [float(r.queries_used) if r.success else None for r in runs]
                aucs[name] = _linear_auc(queries, budget, len(indices))
            ok = (aucs["grabnel"] >= aucs["seqrandom"] >= aucs["random"]
                  and aucs["grabnel"] >= aucs["nosequential"])
            per_seed.append((ok, f"seed{seed}: " + " ".join(
                f"{k}={v:.4f}" for k, v in aucs.items())))
        holds = sum(ok for ok, _ in per_seed)
        report("ablation-ordering", holds >= 2, "; ".join(d for _, d in per_seed))

    def test_parsimony(self, er_victim):
        indices = er_victim["eligible"][:60]
        grabnel_edits, seq_edits = [], []
        for seed in ATTACK_SEEDS:
            for result in _run_attacker(er_victim, grabnel_attack, indices, seed,
                                        edit_budget=3, query_budget=120, n_init=20):
                if result.success:
                    grabnel_edits.append(result.net_edits)
            for result in _run_attacker(er_victim, sequential_random_attack, indices,
                                        seed, edit_budget=3, query_budget=120, n_init=20):
                if result.success:
                    seq_edits.append(result.net_edits)
        g_median = float(np.median(grabnel_edits))
        s_median = float(np.median(seq_edits))
        report("parsimony", g_median <= s_median,
               f"grabnel median={g_median} (n={len(grabnel_edits)}) "
               f"sequential-random median={s_median} (n={len(seq_edits)})")

    def test_campaign_determinism(self, er_victim, tmp_path):
        campaigns = []
        for name in ("one", "two"):
            out = tmp_path / name
            campaign = Campaign(
                dataset_path=er_victim["dataset_path"],
                victim=VictimSpec(weights_path=er_victim["weights_path"]),
                attacker="random",
                attack=AttackConfig(
                    mode=AttackMode.FLIP,
                    constraints=ConstraintSet(mode=ConstraintMode.PRESERVE_COMPONENTS),
                    seed=0, edit_budget=1, query_budget=50),
                output_dir=str(out),
                max_graphs=10,
            )
            run_campaign(campaign, dataset=er_victim["dataset"])
            campaigns.append(out)
        identical = True
        names = sorted(os.listdir(campaigns[0]))
        for file_name in names:
            a = (campaigns[0] / file_name).read_bytes()
            b = (campaigns[1] / file_name).read_bytes()
            if a != b:
                identical = False
                break
        report("campaign-determinism", identical,
               f"{len(names)} output files compared byte-for-byte")


class TestBudgetArithmetic:
    def test_budget_rules(self):
        g = Graph(20, tuple((i, i + 1) for i in range(19)), node_labels=(0,) * 20)
        edits, queries = resolve_budgets(
            AttackConfig(budget_ratio=0.03, query_multiplier=40), g)
        big = Graph(40, tuple((i, i + 1) for i in range(39)), node_labels=(0,) * 40)
        _, capped = resolve_budgets(
            AttackConfig(budget_ratio=0.5, query_multiplier=40, query_cap=20_000), big)
        ok = (edits, queries) == (12, 480) and capped == 20_000
        report("budget-arithmetic", ok,
               f"n=20,r=0.03,x40 -> ({edits}, {queries}); cap -> {capped}")


class TestWLOracle:
    def test_discrete_equivalence(self):
        rng = np.random.default_rng(10)
        mismatches = 0
        for _ in range(500):
            num_iter = int(rng.integers(1, 4))
            graphs = [random_graph(rng, int(rng.integers(1, 9)), p=0.35, labels=3)
                      for _ in range(int(rng.integers(1, 4)))]
            matrix, vocab = wl_extract_discrete(graphs, num_iterations=num_iter)
            for gi, g in enumerate(graphs):
                expected = [dict(c) for c in brute_force_counts(g, num_iter)]
                if counts_by_string(matrix[gi], vocab) != expected:
                    mismatches += 1
        five_colours = Graph(5, ((0, 1), (1, 2), (2, 3), (3, 4)),
                             node_labels=(0, 0, 1, 1, 2))
        level0, _ = wl_extract_discrete([five_colours], num_iterations=1)
        fig_counts = [int(x) for x in level0[0, :3]]
        ok = mismatches == 0 and fig_counts == [2, 2, 1]
        report("wl-oracle-equivalence", ok,
               f"500 instances, {mismatches} mismatches; "
               f"three-colour level-0 counts {fig_counts}")


class TestSurrogateOracle:
    def test_frozen_posterior_and_monotone_evidence(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        monotone = True
        for _ in range(100):
            x, y, lam, noise = random_instance(rng)
            post = fit(x, y, fixed_precisions=lam, fixed_noise_variance=noise)
            xc, yn, _, _ = oracle_normalise(x, y)
            mean, _ = oracle_posterior(xc, yn, lam, noise)
            worst = max(worst, float(np.max(np.abs(post.weight_mean - mean))))
            fitted = fit(x, y)
            if np.any(np.diff(fitted.evidence_path) < -1e-12):
                monotone = False
        ok = worst < 1e-8 and monotone
        report("surrogate-oracle-equivalence", ok,
               f"max |mean error| = {worst:.2e}; evidence monotone: {monotone}")


class TestExpectedImprovement:
    def test_monte_carlo_grid(self):
        n = 1_000_000
        z = scipy_stats.norm.ppf((np.arange(n) + 0.5) / n)
        worst = 0.0
        for sigma in (0.1, 1.0, 3.0):
            for mu in np.linspace(-2.0, 2.0, 9):
                mc = float(np.maximum(mu + sigma * z, 0.0).mean())
                worst = max(worst, abs(mc - expected_improvement(mu, sigma ** 2, 0.0)))
        report("expected-improvement", worst < 1e-3, f"max |EI - MC| = {worst:.2e}")


class TestAttackLossArithmetic:
    def test_examples_and_sign(self):
        a = attack_loss(VictimResponse(class_scores=np.array([0.1, 0.9])), 1)
        b = attack_loss(VictimResponse(class_scores=np.array([0.1, 0.9])), 0, target=1)
        examples_ok = (abs(a - (math.log(0.1) - math.log(0.9))) < 1e-9
                       and abs(b - (math.log(0.9) - math.log(0.1))) < 1e-9)
        rng = np.random.default_rng(12)
        sign_ok = True
        for _ in range(10_000):
            c = int(rng.integers(2, 6))
            raw = rng.exponential(size=c)
            simplex = raw / raw.sum()
            y = int(rng.integers(c))
            loss = attack_loss(VictimResponse(class_scores=simplex), y)
            if (loss > 0) != (int(np.argmax(simplex)) != y):
                sign_ok = False
                break
        report("attack-loss-arithmetic", examples_ok and sign_ok,
               f"examples within 1e-9: {examples_ok}; sign law on 10^4 simplexes: {sign_ok}")


class TestConstraintOracles:
    def test_brute_force_agreement(self):
        rng = np.random.default_rng(13)
        failures = 0
        for _ in range(200):
            n = int(rng.integers(3, 11))
            g = random_graph(rng, n, p=0.3, labels=1)
            two_hop = ConstraintSet(mode=ConstraintMode.TWO_HOP)
            rewire_c = ConstraintSet(mode=ConstraintMode.TWO_HOP_REWIRE)
            preserve = ConstraintSet(mode=ConstraintMode.PRESERVE_COMPONENTS)
            for u in range(n):
                for v in range(u + 1, n):
                    p = Flip(u, v)
                    expected = True if g.has_edge(u, v) else v in bfs_k_hop(g, u, 2)
                    if check_constraint(g, p, two_hop) != expected:
                        failures += 1
                    after = apply_perturbation(g, p)
                    keeps = dfs_component_count(after) == dfs_component_count(g)
                    if check_constraint(g, p, preserve) != keeps:
                        failures += 1
                    if check_constraint(g, p, rewire_c):
                        failures += 1  # flips are never admissible here
            for (a, b) in g.edges:
                for s in range(n):
                    candidate = Rewire(a, b, s)
                    try:
                        validate_perturbation(g, candidate)
                    except Exception:
                        continue
                    expected = s in bfs_k_hop(g, a, 2)
                    if check_constraint(g, candidate, rewire_c) != expected:
                        failures += 1
        report("constraint-oracles", failures == 0,
               f"200 instances exhaustively checked, {failures} disagreements")
