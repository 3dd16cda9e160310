"""Command line entry point: ``roadcross run | summarize | train-q``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import harness
from .agents import q_train, save_qtable
from .config import AgentKind, ConfigError, ExperimentConfig, dump_config, load_config

log = logging.getLogger("roadcross")

CONFIG_NAME = "config.ini"


def _kinds(text: str) -> tuple[AgentKind, ...]:
    try:
        return tuple(AgentKind(t.strip().upper()) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _counts(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="base seed (overrides grid.base_seed)")
    common.add_argument("--kinds", type=_kinds, help="comma-separated agent kinds")
    common.add_argument("--counts", type=_counts, help="comma-separated pedestrian counts")
    common.add_argument("--runs", type=int, help="runs per cell")
    common.add_argument("--tests", type=int, help="tests per run")
    common.add_argument(
        "--set", dest="assignments", type=_assignment, action="append", default=[],
        metavar="KEY=VALUE", help="override any config key, e.g. --set world.dt=0.05",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="roadcross", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="execute an experiment grid")
    run.add_argument("--workers", type=int, default=1, help="worker processes for cells")
    sub.add_parser("summarize", parents=[common], help="recompute summaries from persisted traces")
    tq = sub.add_parser("train-q", parents=[common], help="train a Q-table and write it to a file")
    tq.add_argument("--episodes", type=int, help="training episodes (default: qlearning.episodes)")
    tq.add_argument("--table", type=Path, help="output file (default: <out>/qtable.tsv)")
    return p


def resolve_config(args: argparse.Namespace, fallback: Path | None = None) -> ExperimentConfig:
    path = args.config
    if path is None and fallback is not None and fallback.exists():
        path = fallback
    cfg = load_config(path)
    if args.assignments:
        cfg = cfg.with_overrides(dict(args.assignments))
    grid = cfg.grid
    if args.seed is not None:
        grid = replace(grid, base_seed=args.seed)
    if args.kinds is not None:
        grid = replace(grid, kinds=args.kinds)
    if args.counts is not None:
        grid = replace(grid, counts=args.counts)
    if args.runs is not None:
        grid = replace(grid, runs=args.runs)
    if args.tests is not None:
        grid = replace(grid, tests=args.tests)
    # re-run validation on the assembled grid
    return replace(cfg, grid=replace(grid))


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / CONFIG_NAME).write_text(dump_config(cfg))
    result = harness.run_experiment(cfg, args.out, workers=args.workers)
    print(f"{len(result.records)} tests written to {args.out}")
    if result.failures:
        for (kind, n, run), msg in result.failures:
            print(f"cell {kind.value}/n{n}/run{run} failed: {msg}", file=sys.stderr)
        return 2
    return 0


def cmd_summarize(args) -> int:
    cfg = resolve_config(args, fallback=args.out / CONFIG_NAME)
    records, ledgers = harness.recompute_from_traces(args.out, cfg)
    rows = harness.summarize(records, ledgers) if records else []
    harness.emit_outputs(records, rows, ledgers, args.out, cfg)
    for r in rows:
        print(f"{r.agent_kind.value:20s} n={r.n}  acc={r.accuracy_pct:7.2f}%  "
              f"score={r.score_sum:10.1f}  cpu={r.mean_cpu_ms:9.3f} ms")
    return 0


def cmd_train_q(args) -> int:
    cfg = resolve_config(args)
    table = args.table or args.out / "qtable.tsv"
    table.parent.mkdir(parents=True, exist_ok=True)
    q = q_train(cfg, episodes=args.episodes, seed=cfg.grid.base_seed)
    save_qtable(q, table)
    print(f"Q-table with {len(q.values)} states written to {table}")
    return 0


COMMANDS = {"run": cmd_run, "summarize": cmd_summarize, "train-q": cmd_train_q}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
