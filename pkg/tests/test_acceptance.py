"""Exit criteria for the build. Each test reports one PASS/FAIL line in the terminal summary."""

import csv
import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
import yaml

from conftest import ACCEPTANCE_LINES, random_walk, sawtooth
from oracles import brute_force_fifo_profit, finite_difference_gradients, relative_error, scalar_adam
from qtrader.agent import Agent, Batch, Hyperparams, Transition, double_dqn_target, dqn_target, train
from qtrader.env import env_reset, env_step
from qtrader.harness import PAPER_COLUMNS, ExperimentConfig, emit_summary_table, read_trade_profile, run_experiments
from qtrader.market_data import PriceSeries, write_csv
from qtrader.neural import (
    AdamState,
    Aggregation,
    Dense,
    Head,
    NetworkParams,
    NetworkSpec,
    adam_step,
    backward,
    combine_dueling,
    forward,
    init_network,
)


@contextmanager
def criterion(label):
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"FAIL  {label}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    ACCEPTANCE_LINES.append(f"PASS  {label}")


def test_c01_gradient_oracle():
    with criterion("C1 gradient oracle (20 nets, FD h=1e-5, rel err < 1e-4, < 30 s)"):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        combos = [(Head.PLAIN, Aggregation.MEAN)] + [(Head.DUELING, a) for a in Aggregation]
        worst = 0.0
        for i in range(20):
            head, agg = combos[i % 4]
            spec = NetworkSpec(int(rng.integers(3, 6)), (int(rng.integers(4, 7)), int(rng.integers(3, 6))), 3, head, agg)
            params = init_network(spec, rng)
            for layer in params.layers():
                layer.b[:] = rng.normal(0, 0.1, size=layer.b.shape)
            x = rng.uniform(0, 1, size=(8, spec.input_dim))
            actions = rng.integers(0, 3, size=8)
            targets = rng.normal(size=8)
            analytic = backward(params, x, actions, targets).arrays()
            numeric = finite_difference_gradients(params, x, actions, targets, h=1e-5)
            worst = max(worst, max(relative_error(g, n).max() for g, n in zip(analytic, numeric)))
        elapsed = time.perf_counter() - start
        assert worst < 1e-4, f"max relative error {worst:.3e}"
        assert elapsed < 30, f"took {elapsed:.1f} s"


def test_c02_adam_oracle():
    with criterion("C2 Adam matches scalar recurrence for 10 steps within 1e-12"):
        grads = [0.3, -0.1, 0.25, 0.0, -0.7, 1.2, 0.05, -0.33, 0.8, -0.02]
        expected = scalar_adam(grads, 0.4, lr=0.00025)
        params = NetworkParams(NetworkSpec(1, (), 1), [Dense(np.array([[0.4]]), np.zeros(1))])
        opt = AdamState.for_params(params, learning_rate=0.00025)
        for g, want in zip(grads, expected):
            grad = NetworkParams(params.spec, [Dense(np.array([[g]]), np.zeros(1))])
            adam_step(params, grad, opt)
            assert abs(params.trunk[0].W[0, 0] - want) < 1e-12
        assert opt.t == 10


def test_c03_target_rules():
    with criterion("C3 target rules: terminal, DQN==DDQN with shared params (1000 batches), 2.9 example"):
        rng = np.random.default_rng(7)
        net = init_network(NetworkSpec(5, (8, 4), 3), rng)
        other = init_network(NetworkSpec(5, (8, 4), 3), rng)
        # (a) terminal transitions
        for _ in range(20):
            n = 16
            batch = Batch(rng.uniform(size=(n, 5)), rng.integers(0, 3, n), rng.normal(size=n) * 10,
                          rng.uniform(size=(n, 5)), np.ones(n, bool))
            assert np.array_equal(dqn_target(batch, other, 0.95), batch.rewards)
            assert np.array_equal(double_dqn_target(batch, net, other, 0.95), batch.rewards)
        # (b) coincidence; random biases keep the next-state argmax unique
        for _ in range(1000):
            n = 32
            batch = Batch(rng.uniform(size=(n, 5)), rng.integers(0, 3, n), rng.normal(size=n),
                          rng.uniform(size=(n, 5)), rng.random(n) < 0.1)
            shared = init_network(NetworkSpec(5, (8, 4), 3), rng)
            for layer in shared.layers():
                layer.b[:] = rng.normal(0, 0.5, size=layer.b.shape)
            top2 = np.sort(forward(shared, batch.next_states), axis=1)[:, -2:]
            assert np.all(top2[:, 1] > top2[:, 0]), "argmax not unique"
            diff = np.abs(double_dqn_target(batch, shared, shared, 0.95) - dqn_target(batch, shared, 0.95)).max()
            assert diff < 1e-12
        # (c) Eq.1 example
        const = NetworkParams(NetworkSpec(5, (), 3), [Dense(np.zeros((5, 3)), np.array([2.0, 0.0, 1.0]))])
        one = Batch(np.zeros((1, 5)), np.zeros(1, int), np.array([1.0]), np.zeros((1, 5)), np.array([False]))
        assert dqn_target(one, const, 0.95)[0] == 2.9


def test_c04_dueling_identifiability():
    with criterion("C4 dueling shift invariance (1e-12), max(Q)==v under max, argmax alignment"):
        rng = np.random.default_rng(11)
        for _ in range(2000):
            v = rng.normal() * 5
            a = rng.normal(size=3) * 5
            c = rng.normal() * 5
            for mode in (Aggregation.MEAN, Aggregation.MAX):
                assert np.abs(combine_dueling(v, a + c, mode) - combine_dueling(v, a, mode)).max() < 1e-12
                assert np.argmax(combine_dueling(v, a, mode)) == np.argmax(a)
            assert combine_dueling(v, a, Aggregation.MAX).max() == v


def test_c05_ledger_conservation():
    with criterion("C5 ledger total == brute-force FIFO oracle on 1000 random sequences (exact)"):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            n = int(rng.integers(2, 120))
            closes = np.round(rng.uniform(1, 500, size=n), 2)
            series = PriceSeries.from_closes(closes)
            actions = rng.integers(0, 3, size=n - 1)
            _, ledger = env_reset(series, 1)
            for t, a in enumerate(actions):
                env_step(series, ledger, t, a, 1)
            want_total, want_open = brute_force_fifo_profit(closes.tolist(), actions.tolist())
            assert ledger.total_profit == want_total
            assert len(ledger.open_positions) == want_open


def test_c06_epsilon_schedule():
    with criterion("C6 epsilon == max(0.1, 0.995^k) within 1e-12 at k in {0,1,459,460,10000}"):
        hp = Hyperparams(window_size=3, batch_size=2, hidden_dims=(4,), target_sync_interval=500)
        agent = Agent("dqn", hp, seed=0)
        rng = np.random.default_rng(0)
        for _ in range(4):
            agent.remember(Transition(rng.uniform(size=3), 1, 0.0, rng.uniform(size=3), False))
        checks = {0, 1, 459, 460, 10_000}
        for k in range(10_001):
            if k in checks:
                assert abs(agent.epsilon - max(0.1, 0.995**k)) < 1e-12, f"k={k}"
            if k < 10_000:
                agent.replay_update()


def _write_synthetic_500(tmp_path):
    series = random_walk(500, np.random.default_rng(500), start=200.0, sigma=2.0, symbol="SYN")
    return str(write_csv(series, tmp_path / "SYN.csv"))


def test_c07_seeded_determinism(tmp_path):
    with criterion("C7 train+evaluate twice on 500-pt series: byte-identical CSVs, < 2 min per run"):
        data = _write_synthetic_500(tmp_path)
        outputs = []
        for name in ("first", "second"):
            start = time.perf_counter()
            report = run_experiments(ExperimentConfig([data], ["dqn"], seeds=[17], output_dir=str(tmp_path / name)))
            elapsed = time.perf_counter() - start
            assert report.all_ok, report.records[0].error
            assert elapsed < 120, f"run took {elapsed:.1f} s"
            rec = report.records[0]
            outputs.append((open(rec.metrics_path, "rb").read(), open(rec.trades_path, "rb").read()))
        assert outputs[0] == outputs[1]


@pytest.mark.slow
def test_c08_learning_smoke():
    with criterion("C8 sawtooth DQN (30 episodes): profit > 0 in >= 8/10 seeds, final loss < first"):
        series = sawtooth(500, period=20, amplitude=10.0)
        hp = Hyperparams(episodes=30)
        profitable = 0
        for seed in range(10):
            metrics = train(series, "dqn", hp, seed=seed).metrics
            profitable += metrics[-1].total_profit > 0
            assert metrics[-1].mean_loss < metrics[0].mean_loss, f"seed {seed}: loss did not fall"
        assert profitable >= 8, f"only {profitable}/10 seeds profitable"


def test_c09_protocol_fidelity(tmp_path):
    with criterion("C9 empty override section resolves to the published hyperparameters"):
        data = _write_synthetic_500(tmp_path)
        cfg = tmp_path / "exp.yaml"
        cfg.write_text(yaml.safe_dump({"datasets": [data], "agents": ["dqn"], "seeds": [0],
                                       "output_dir": str(tmp_path / "out"), "hyperparams": {}}))
        report = run_experiments(ExperimentConfig.load(cfg))
        assert report.all_ok
        hp = json.loads(open(report.records[0].manifest_path).read())["hyperparams"]
        expected = {"window_size": 90, "batch_size": 64, "episodes": 50, "gamma": 0.95, "epsilon_start": 1.0,
                    "epsilon_min": 0.1, "epsilon_decay": 0.995, "learning_rate": 0.00025,
                    "optimizer": "adam", "loss": "mse"}
        assert {k: hp[k] for k in expected} == expected
        assert sum(1 for _ in open(report.records[0].metrics_path)) == 1 + 50


def test_c10_output_fidelity(tmp_path):
    with criterion("C10 four-column table schema; trades.csv sums to test profit over 50 random runs"):
        rng = np.random.default_rng(10)
        checked = 0
        for i in range(50):
            n = int(rng.integers(40, 120))
            series = random_walk(n, rng, start=float(rng.uniform(20, 300)), sigma=float(rng.uniform(0.5, 5)),
                                 symbol=f"S{i}")
            data = write_csv(series, tmp_path / f"S{i}.csv")
            config = ExperimentConfig(
                [str(data)], [str(rng.choice(["dqn", "ddqn", "dueling"]))], seeds=[int(rng.integers(1000))],
                output_dir=str(tmp_path / f"run{i}"),
                hyperparams={"window_size": int(rng.integers(3, 10)), "episodes": int(rng.integers(1, 4)),
                             "batch_size": 8, "hidden_dims": [8, 4]},
            )
            report = run_experiments(config)
            rec = report.records[0]
            assert rec.ok, rec.error
            total = 0.0
            for row in read_trade_profile(rec.trades_path):
                total += float(row["realized_profit"])
            assert total == rec.test_profit
            summary = list(csv.DictReader(open(tmp_path / f"run{i}" / "summary.csv")))
            assert float(summary[0]["Test Profit"]) == total
            checked += 1
            _, csv_text = emit_summary_table(report)
            assert tuple(csv_text.splitlines()[0].split(",")[1:5]) == PAPER_COLUMNS
        assert checked == 50
