"""Command line entry point: ``qtrader train | evaluate | report``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .agent import AgentKind, Hyperparams, evaluate
from .harness import (
    ConfigInvalid,
    DatasetSpec,
    ExperimentConfig,
    collect_report,
    emit_summary_table,
    emit_trade_profile,
    run_experiments,
    write_report,
)
from .market_data import DEFAULT_CLOSE_COLUMN, DEFAULT_DATE_COLUMN, MarketDataError, load_csv
from .neural import load_checkpoint


def _config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config).to_dict() if args.config else {"datasets": [], "agents": []}
    if args.data:
        base["datasets"] = [dataclasses.asdict(DatasetSpec.parse(p)) for p in args.data]
    if args.agent:
        base["agents"] = args.agent
    elif not base.get("agents"):
        base["agents"] = [k.value for k in AgentKind]
    if args.seed:
        base["seeds"] = args.seed
    if args.out:
        base["output_dir"] = args.out
    if args.workers:
        base["workers"] = args.workers
    columns = base.setdefault("columns", {})
    if args.close_column:
        columns["close"] = args.close_column
    if args.date_column:
        columns["date"] = args.date_column
    hp = dict(base.get("hyperparams") or {})
    if args.episodes is not None:
        hp["episodes"] = args.episodes
    if args.window is not None:
        hp["window_size"] = args.window
    base["hyperparams"] = hp
    return ExperimentConfig.from_dict(base)


def cmd_train(args) -> int:
    try:
        config = _config_from_args(args)
    except (ConfigInvalid, ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    report = run_experiments(config)
    text, _ = emit_summary_table(report)
    print(text, end="")
    for r in report.records:
        if not r.ok:
            print(f"FAILED {r.symbol}/{r.agent.value}/seed {r.seed}: {r.error}", file=sys.stderr)
    return 0 if report.all_ok else 1


def cmd_evaluate(args) -> int:
    params, meta = load_checkpoint(args.checkpoint)
    stored = dict(meta.get("hyperparams") or {})
    stored["window_size"] = params.spec.input_dim
    hp = Hyperparams.from_overrides(stored)
    kind = AgentKind(meta["agent"]) if "agent" in meta else None
    try:
        series = load_csv(
            args.data,
            args.close_column or DEFAULT_CLOSE_COLUMN,
            args.date_column or DEFAULT_DATE_COLUMN,
        )
        result = evaluate(series, params, kind, hp)
    except (MarketDataError, ValueError, OSError) as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit_trade_profile(result.events, series, out / "trades.csv")
    print(f"{series.symbol}: test reward {result.total_reward:g}, test profit {result.total_profit:.2f}, "
          f"open positions {result.open_positions}")
    return 0


def cmd_report(args) -> int:
    out = args.out or "runs"
    report = collect_report(out)
    if not report.records:
        print(f"no runs found under {out}", file=sys.stderr)
        return 1
    write_report(report, out)
    text, _ = emit_summary_table(report)
    print(text, end="")
    return 0 if report.all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtrader", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data", action="append", help="price CSV (repeatable for train)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--close-column")
        p.add_argument("--date-column")

    p = sub.add_parser("train", help="train and test every (dataset, agent, seed) run")
    common(p)
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--agent", action="append", choices=[k.value for k in AgentKind])
    p.add_argument("--episodes", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--seed", action="append", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy test pass of a checkpoint over a CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-emit summary tables from stored runs")
    p.add_argument("--out", help="output directory holding the runs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "evaluate":
        if not args.data or len(args.data) != 1:
            print("evaluate needs exactly one --data file", file=sys.stderr)
            return 2
        args.data = args.data[0]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
