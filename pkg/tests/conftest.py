import numpy as np
import pytest

from qtrader.market_data import PriceSeries


def sawtooth(n=500, period=20, amplitude=10.0, base=100.0):
    t = np.arange(n)
    return PriceSeries.from_closes(base + amplitude * (t % period) / (period - 1), symbol="SAW")


def random_walk(n, rng, start=100.0, sigma=1.0, symbol="RW"):
    steps = rng.normal(0.0, sigma, size=n)
    closes = np.maximum(start + np.cumsum(steps), 1.0)
    return PriceSeries.from_closes(np.round(closes, 2), symbol=symbol)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def saw():
    return sawtooth()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
