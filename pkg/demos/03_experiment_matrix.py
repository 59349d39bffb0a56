"""
Running a (stock x agent) experiment matrix
===========================================

Writes two synthetic price CSVs, runs DQN, Double DQN and Dueling DDQN on
each with a 50/50 chronological split, prints the summary table and draws
the time-market profile of one run (hold=red, buy=green, sell=blue).

The CLI equivalent is::

    qtrader train --data AAA.csv --data BBB.csv --episodes 5 --out demo_runs
"""

from pathlib import Path

import numpy as np

from qtrader.harness import ExperimentConfig, emit_summary_table, read_trade_profile, run_experiments
from qtrader.market_data import PriceSeries, write_csv

workdir = Path("demo_runs")
workdir.mkdir(exist_ok=True)

rng = np.random.default_rng(3)
paths = []
for symbol, drift in (("AAA", 0.05), ("BBB", -0.02)):
    walk = 150 + np.cumsum(rng.normal(drift, 1.5, size=600))
    cycle = 6 * np.sin(np.arange(600) * 2 * np.pi / 45)
    series = PriceSeries.from_closes(np.round(np.maximum(walk + cycle, 5), 2), symbol=symbol)
    paths.append(str(write_csv(series, workdir / f"{symbol}.csv")))

# everything not overridden keeps its published default (window 90, gamma 0.95, ...)
config = ExperimentConfig(
    datasets=paths,
    agents=["dqn", "ddqn", "dueling"],
    seeds=[0],
    output_dir=str(workdir / "runs"),
    hyperparams={"episodes": 5},
)
config.dump(workdir / "experiment.yaml")
report = run_experiments(config)
text, _ = emit_summary_table(report)
print(text)

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    rows = read_trade_profile(report.records[0].trades_path)
    colors = [r["color"] for r in rows]
    fig, ax = plt.subplots(figsize=(10, 3.5))
    ax.plot([int(r["t"]) for r in rows], [float(r["close"]) for r in rows], color="0.7", lw=1)
    ax.scatter([int(r["t"]) for r in rows], [float(r["close"]) for r in rows], c=colors, s=8)
    ax.set(xlabel="test step", ylabel="close", title="time-market profile (AAA, DQN)")
    fig.tight_layout()
    fig.savefig(workdir / "time_market_profile.png", dpi=120)
    print("wrote", workdir / "time_market_profile.png")
