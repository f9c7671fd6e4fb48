"""Command-line entry points: dataset generation, victim training/serving,
attack campaigns, and adversarial-pattern reports.

Any flag may also come from a JSON config file (--config); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys

from .attack import AttackConfig
from .data import ERGenConfig, generate_er_dataset, load_any_dataset, save_dataset
from .graph import AttackMode, ConstraintMode, ConstraintSet
from .harness import (
    Campaign,
    VictimSpec,
    adversarial_pattern_stats,
    load_trace_dir,
    run_campaign,
)
from .victim import (
    TrainConfig,
    accuracy,
    gcn_forward,
    load_weights,
    save_weights,
    serve_stream,
    serve_tcp,
    train_gcn,
)

log = logging.getLogger(__name__)


def _apply_config(subparsers: dict[str, argparse.ArgumentParser], argv: list[str]) -> None:
    """Turn config-file entries into subcommand defaults (explicit flags win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, "r", encoding="utf-8") as fh:
        overrides = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
    consumed = set()
    for sub in subparsers.values():
        for action in sub._actions:
            if action.dest in overrides:
                action.default = overrides[action.dest]
                action.required = False
                consumed.add(action.dest)
    unknown = set(overrides) - consumed
    if unknown:
        raise SystemExit(f"config keys do not match any flag: {sorted(unknown)}")


def cmd_gen_data(args) -> None:
    cfg = ERGenConfig(
        min_nodes=args.min_nodes,
        max_nodes=args.max_nodes,
        component_range=tuple(int(x) for x in str(args.components).split(",")),
        edge_probability=args.edge_prob,
        seed=args.seed,
    )
    ds = generate_er_dataset(cfg, args.size)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.graphs)} graphs to {args.out} "
          f"(train/val/test = {len(ds.split.train)}/{len(ds.split.val)}/{len(ds.split.test)})")


def cmd_train_victim(args) -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    ds = load_any_dataset(args.data)
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        decay_epoch=args.decay_epoch,
        decay_factor=args.decay_factor,
    )
    weights = train_gcn(ds, cfg)
    save_weights(weights, args.out)
    val = ds.split.val
    if val:
        acc = accuracy(weights, [ds.graphs[i] for i in val], [ds.labels[i] for i in val])
        print(f"validation accuracy: {acc:.4f}")
    print(f"wrote weights to {args.out}")


def cmd_serve_victim(args) -> None:
    weights = load_weights(args.weights)

    def score(graph):
        return gcn_forward(graph, weights).class_scores.tolist()

    if args.tcp is not None:
        serve_tcp(score, args.host, args.tcp)
    else:
        serve_stream(score, sys.stdin, sys.stdout)


def _victim_spec(args) -> VictimSpec:
    if args.victim:
        return VictimSpec(weights_path=args.victim, timeout=args.timeout)
    if args.victim_cmd:
        return VictimSpec(command=shlex.split(args.victim_cmd),
                          interpret=args.interpret, timeout=args.timeout)
    if args.victim_tcp:
        host, _, port = args.victim_tcp.rpartition(":")
        return VictimSpec(tcp=(host, int(port)), interpret=args.interpret,
                          timeout=args.timeout)
    raise SystemExit("one of --victim, --victim-cmd, --victim-tcp is required")


def cmd_attack(args) -> None:
    attack_cfg = AttackConfig(
        mode=AttackMode(args.mode),
        constraints=ConstraintSet(mode=ConstraintMode(args.constraint)),
        budget_ratio=args.budget_ratio,
        query_multiplier=args.query_multiplier,
        query_cap=args.query_cap,
        n_init=args.n_init,
        targeted=args.target_class,
        seed=args.seed,
        edit_budget=args.edit_budget,
        query_budget=args.query_budget,
    )
    campaign = Campaign(
        dataset_path=args.data,
        victim=_victim_spec(args),
        attacker=args.attacker,
        attack=attack_cfg,
        output_dir=args.out,
        max_graphs=args.max_graphs,
        normalization=args.normalization,
        workers=args.workers,
    )
    summary = run_campaign(campaign)
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_stats(args) -> None:
    traces = load_trace_dir(args.traces)
    report = adversarial_pattern_stats(traces)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="grabnel",
                                     description="Black-box attacks on graph classifiers")
    sub = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    p = registry["gen-data"] = sub.add_parser("gen-data", help="generate a component-count dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=1500)
    p.add_argument("--min-nodes", type=int, default=15)
    p.add_argument("--max-nodes", type=int, default=20)
    p.add_argument("--components", default="1,2,3",
                   help="comma-separated component counts to sample from")
    p.add_argument("--edge-prob", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_data)

    p = registry["train-victim"] = sub.add_parser("train-victim", help="train the built-in GCN")
    p.add_argument("--data", required=True, help="dataset JSON or TUDataset directory")
    p.add_argument("--out", required=True, help="output weights (.npz)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--decay-epoch", type=int, default=120)
    p.add_argument("--decay-factor", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train_victim)

    p = registry["serve-victim"] = sub.add_parser("serve-victim", help="serve weights over the wire protocol")
    p.add_argument("--weights", required=True)
    p.add_argument("--tcp", type=int, default=None, help="listen on this TCP port")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve_victim)

    p = registry["attack"] = sub.add_parser("attack", help="run an attack campaign over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--victim", help="weights file for the in-process victim")
    p.add_argument("--victim-cmd", help="command serving the wire protocol on stdio")
    p.add_argument("--victim-tcp", help="host:port of a protocol server")
    p.add_argument("--interpret", choices=["probabilities", "logits"],
                   default="probabilities")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--attacker", default="grabnel",
                   choices=["grabnel", "random", "sequential-random", "genetic",
                            "grabnel-no-sequential"])
    p.add_argument("--mode", default="flip",
                   choices=[m.value for m in AttackMode])
    p.add_argument("--constraint", default="none",
                   choices=[c.value for c in ConstraintMode])
    p.add_argument("--budget-ratio", type=float, default=0.03)
    p.add_argument("--query-multiplier", type=int, default=40)
    p.add_argument("--query-cap", type=int, default=20_000)
    p.add_argument("--edit-budget", type=int, default=None)
    p.add_argument("--query-budget", type=int, default=None)
    p.add_argument("--n-init", type=int, default=50)
    p.add_argument("--target-class", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--max-graphs", type=int, default=None)
    p.add_argument("--normalization", choices=["squared", "nodes", "raw"],
                   default="squared")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config")
    p.set_defaults(func=cmd_attack)

    p = registry["stats"] = sub.add_parser("stats", help="adversarial-pattern report from traces")
    p.add_argument("--traces", required=True, help="directory of trace_*.json files")
    p.add_argument("--out", default=None)
    p.add_argument("--config")
    p.set_defaults(func=cmd_stats)

    return parser, registry


def main(argv: list[str] | None = None) -> None:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, registry = build_parser()
    _apply_config(registry, argv)
    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
