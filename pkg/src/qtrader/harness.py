"""Experiment matrix runner and report/trade-profile emitters.

Each (symbol, agent, seed) run writes into ``<output_dir>/<symbol>/<agent>/seed_<seed>/``::

    metrics.csv      per-episode training metrics
    trades.csv       greedy test-period time-market profile
    checkpoint.npz   trained main network
    manifest.json    resolved config, data ranges and results

A failed run is recorded with its error and does not stop the others.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .agent import METRIC_COLUMNS, AgentKind, EpisodeMetrics, Hyperparams, evaluate, train
from .env import Action, TradeEvent
from .market_data import (
    DEFAULT_CLOSE_COLUMN,
    DEFAULT_DATE_COLUMN,
    DEFAULT_DATE_FORMAT,
    PriceSeries,
    SplitSpec,
    load_csv,
    split_series,
)
from .neural import save_checkpoint

logger = logging.getLogger(__name__)

ACTION_COLORS = {Action.HOLD: "red", Action.BUY: "green", Action.SELL: "blue"}
TRADE_COLUMNS = ("t", "date", "close", "action", "action_name", "color", "realized_profit")
PAPER_COLUMNS = ("Train Rewards", "Train Profit", "Test Rewards", "Test Profit")
SUMMARY_COLUMNS = (
    "Dataset",
    *PAPER_COLUMNS,
    "Agent",
    "Seed",
    "Cumulative Train Rewards",
    "Cumulative Train Profit",
    "Status",
)


class ConfigInvalid(ValueError):
    pass


def _num(x: float) -> str:
    """Exact, round-trippable text for a float."""
    return repr(float(x))


@dataclass(frozen=True)
class DatasetSpec:
    path: str
    symbol: str

    @classmethod
    def parse(cls, entry) -> "DatasetSpec":
        if isinstance(entry, str):
            return cls(entry, Path(entry).stem)
        if isinstance(entry, dict) and "path" in entry:
            return cls(str(entry["path"]), str(entry.get("symbol") or Path(entry["path"]).stem))
        raise ConfigInvalid(f"bad dataset entry {entry!r}")


@dataclass(frozen=True)
class RunPlan:
    symbol: str
    data_path: str
    agent: AgentKind
    seed: int
    run_dir: str


@dataclass
class ExperimentConfig:
    datasets: list[DatasetSpec]
    agents: list[AgentKind]
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str = "runs"
    hyperparams: dict = field(default_factory=dict)
    close_column: str = DEFAULT_CLOSE_COLUMN
    date_column: str = DEFAULT_DATE_COLUMN
    date_format: str = DEFAULT_DATE_FORMAT
    train_fraction: float = 0.5
    workers: int = 1

    def __post_init__(self):
        self.datasets = [d if isinstance(d, DatasetSpec) else DatasetSpec.parse(d) for d in self.datasets]
        try:
            self.agents = [AgentKind(a) for a in self.agents]
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        self.seeds = [int(s) for s in self.seeds]
        self.hyperparams = dict(self.hyperparams or {})
        if not self.datasets:
            raise ConfigInvalid("at least one dataset is required")
        if not self.agents:
            raise ConfigInvalid("at least one agent kind is required")
        if not self.seeds:
            raise ConfigInvalid("at least one seed is required")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        try:
            SplitSpec(self.train_fraction)
            self.resolved_hyperparams()
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def resolved_hyperparams(self) -> Hyperparams:
        return Hyperparams.from_overrides(self.hyperparams)

    def run_plan(self) -> list[RunPlan]:
        out = Path(self.output_dir)
        return [
            RunPlan(d.symbol, d.path, agent, seed, str(out / d.symbol / agent.value / f"seed_{seed}"))
            for d in self.datasets
            for agent in self.agents
            for seed in self.seeds
        ]

    def to_dict(self) -> dict:
        return {
            "datasets": [asdict(d) for d in self.datasets],
            "agents": [a.value for a in self.agents],
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "hyperparams": dict(self.hyperparams),
            "columns": {"close": self.close_column, "date": self.date_column, "date_format": self.date_format},
            "train_fraction": self.train_fraction,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        columns = d.pop("columns", None) or {}
        unknown = set(d) - {"datasets", "agents", "seeds", "output_dir", "hyperparams", "train_fraction", "workers"}
        if unknown:
            raise ConfigInvalid(f"unknown config key(s): {sorted(unknown)}")
        return cls(
            datasets=d.get("datasets") or [],
            agents=d.get("agents") or [],
            seeds=d.get("seeds", [0]),
            output_dir=str(d.get("output_dir", "runs")),
            hyperparams=d.get("hyperparams") or {},
            close_column=columns.get("close", DEFAULT_CLOSE_COLUMN),
            date_column=columns.get("date", DEFAULT_DATE_COLUMN),
            date_format=columns.get("date_format", DEFAULT_DATE_FORMAT),
            train_fraction=float(d.get("train_fraction", 0.5)),
            workers=int(d.get("workers", 1)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with Path(path).open() as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


@dataclass
class RunRecord:
    symbol: str
    agent: AgentKind
    seed: int
    status: str = "ok"
    error: str | None = None
    train_reward: float = math.nan
    train_profit: float = math.nan
    train_reward_cumulative: float = math.nan
    train_profit_cumulative: float = math.nan
    test_reward: float = math.nan
    test_profit: float = math.nan
    run_dir: str | None = None
    metrics_path: str | None = None
    trades_path: str | None = None
    checkpoint_path: str | None = None
    manifest_path: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = self.agent.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["agent"] = AgentKind(d["agent"])
        return cls(**d)


@dataclass
class RunReport:
    records: list[RunRecord] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.records)

    def __len__(self) -> int:
        return len(self.records)


def write_metrics_csv(metrics: Iterable[EpisodeMetrics], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for m in metrics:
            writer.writerow(
                [m.episode, _num(m.total_reward), _num(m.total_profit), _num(m.mean_loss), _num(m.epsilon_end)]
            )
    return path


def read_metrics_csv(path: str | Path) -> list[EpisodeMetrics]:
    with Path(path).open(newline="") as fh:
        return [
            EpisodeMetrics(
                int(row["episode"]),
                float(row["total_reward"]),
                float(row["total_profit"]),
                float(row["mean_loss"]),
                float(row["epsilon_end"]),
            )
            for row in csv.DictReader(fh)
        ]


def emit_trade_profile(
    events: Sequence[TradeEvent], series: PriceSeries | None = None, path: str | Path | None = None
) -> str:
    """Time-market profile CSV: one row per evaluation step.

    Returns the CSV text and writes it to ``path`` when given. ``series``, if
    passed, is used to cross-check the event prices.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRADE_COLUMNS)
    for ev in events:
        if series is not None and series.closes[ev.t] != ev.price:
            raise ValueError(f"event at t={ev.t} does not match the series close")
        writer.writerow(
            [
                ev.t,
                ev.date.isoformat(),
                _num(ev.price),
                int(ev.action),
                ev.action.name.lower(),
                ACTION_COLORS[ev.action],
                _num(ev.realized_profit),
            ]
        )
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_trade_profile(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _series_range(series: PriceSeries) -> dict:
    return {"rows": len(series), "first_date": series.dates[0].isoformat(), "last_date": series.dates[-1].isoformat()}


def run_single(plan: RunPlan, config: ExperimentConfig) -> RunRecord:
    record = RunRecord(plan.symbol, plan.agent, plan.seed, run_dir=plan.run_dir)
    try:
        hp = config.resolved_hyperparams()
        series = load_csv(
            plan.data_path,
            config.close_column,
            config.date_column,
            symbol=plan.symbol,
            date_format=config.date_format,
        )
        train_part, test_part = split_series(series, SplitSpec(config.train_fraction), hp.window_size)

        result = train(train_part, plan.agent, hp, plan.seed)
        test = evaluate(test_part, result.params, plan.agent, hp)

        run_dir = Path(plan.run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        record.metrics_path = str(write_metrics_csv(result.metrics, run_dir / "metrics.csv"))
        record.trades_path = str(run_dir / "trades.csv")
        emit_trade_profile(test.events, test_part, record.trades_path)
        record.checkpoint_path = str(
            save_checkpoint(
                run_dir / "checkpoint.npz",
                result.params,
                {"agent": plan.agent.value, "seed": plan.seed, "symbol": plan.symbol, "hyperparams": hp.to_dict()},
            )
        )
        last = result.last
        if last is not None:
            record.train_reward = last.total_reward
            record.train_profit = last.total_profit
        record.train_reward_cumulative = result.cumulative_reward
        record.train_profit_cumulative = result.cumulative_profit
        record.test_reward = test.total_reward
        record.test_profit = test.total_profit

        record.manifest_path = str(run_dir / "manifest.json")
        manifest = {
            "symbol": plan.symbol,
            "agent": plan.agent.value,
            "seed": plan.seed,
            "data_path": plan.data_path,
            "skipped_rows": series.skipped_rows,
            "columns": {"close": config.close_column, "date": config.date_column, "date_format": config.date_format},
            "train_fraction": config.train_fraction,
            "train_range": _series_range(train_part),
            "test_range": _series_range(test_part),
            "hyperparams": hp.to_dict(),
            "network": result.params.spec.to_dict(),
            "test_open_positions": test.open_positions,
            "record": record.to_dict(),
        }
        Path(record.manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except Exception as exc:  # one bad run must not abort the matrix
        logger.error("run %s/%s/seed %d failed: %s", plan.symbol, plan.agent.value, plan.seed, exc)
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def run_experiments(config: ExperimentConfig) -> RunReport:
    plans = config.run_plan()
    if config.workers > 1 and len(plans) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(run_single, plans, [config] * len(plans)))
    else:
        records = [run_single(p, config) for p in plans]
    report = RunReport(records)
    write_report(report, config.output_dir)
    return report


def _summary_rows(report: RunReport) -> list[list]:
    rows = []
    for r in sorted(report.records, key=lambda r: (r.symbol, list(AgentKind).index(r.agent), r.seed)):
        rows.append(
            [
                r.symbol,
                r.train_reward,
                r.train_profit,
                r.test_reward,
                r.test_profit,
                r.agent.label,
                r.seed,
                r.train_reward_cumulative,
                r.train_profit_cumulative,
                r.status,
            ]
        )
    return rows


def emit_summary_table(report: RunReport) -> tuple[str, str]:
    """Summary as ``(text_table, csv_text)``.

    Train Rewards/Profit are the last training episode's totals; the
    cumulative columns sum them over all episodes.
    """
    rows = _summary_rows(report)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow([_num(c) if isinstance(c, float) else c for c in row])
    csv_text = buf.getvalue()

    def cell(c):
        return f"{c:.2f}" if isinstance(c, float) else str(c)

    table = [list(SUMMARY_COLUMNS)] + [[cell(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(SUMMARY_COLUMNS))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n", csv_text


def write_report(report: RunReport, output_dir: str | Path) -> dict[str, Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    text, csv_text = emit_summary_table(report)
    paths = {"summary_txt": out / "summary.txt", "summary_csv": out / "summary.csv", "report": out / "report.json"}
    paths["summary_txt"].write_text(text)
    paths["summary_csv"].write_text(csv_text)
    paths["report"].write_text(json.dumps([r.to_dict() for r in report.records], indent=2) + "\n")
    return paths


def collect_report(output_dir: str | Path) -> RunReport:
    """Rebuild a report from the run manifests stored under ``output_dir``.

    Failed runs leave no manifest; they are recovered from ``report.json``
    when it exists.
    """
    out = Path(output_dir)
    records = {}
    saved = out / "report.json"
    if saved.exists():
        for d in json.loads(saved.read_text()):
            r = RunRecord.from_dict(d)
            records[(r.symbol, r.agent, r.seed)] = r
    for manifest in sorted(out.glob("*/*/seed_*/manifest.json")):
        r = RunRecord.from_dict(json.loads(manifest.read_text())["record"])
        records[(r.symbol, r.agent, r.seed)] = r
    return RunReport(list(records.values()))
