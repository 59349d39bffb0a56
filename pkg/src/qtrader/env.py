"""Sliding-window trading environment with a FIFO trade ledger.

States are sigmoid-squashed consecutive close differences over a trailing
window. Buys always succeed (no cash limit); a sell closes the oldest open
purchase and realizes ``sale - purchase``. A sell with nothing in inventory
is executed as a hold.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from datetime import date
from enum import IntEnum
from typing import Callable

import numpy as np

from .market_data import PriceSeries, TooShort

# sigmoid saturates to exactly 0.0 / 1.0 in float64 beyond |x| ~ 37; keep it open
_LOW = np.nextafter(0.0, 1.0)
_HIGH = np.nextafter(1.0, 0.0)


class Action(IntEnum):
    HOLD = 0
    BUY = 1
    SELL = 2


N_ACTIONS = len(Action)


class EnvError(RuntimeError):
    pass


class EpisodeFinished(EnvError):
    pass


class BadIndex(EnvError, IndexError):
    pass


def sigmoid(x):
    """Logistic function, overflow-free and kept strictly inside (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    out = np.clip(out, _LOW, _HIGH)
    return out.item() if out.ndim == 0 else out


RewardFn = Callable[[float], float]


def sign_reward(profit: float) -> float:
    return float(np.sign(profit))


def profit_reward(profit: float) -> float:
    return float(profit)


REWARD_FUNCTIONS: dict[str, RewardFn] = {"sign": sign_reward, "profit": profit_reward}


@dataclass(frozen=True)
class MarketState:
    features: np.ndarray
    t: int


@dataclass(frozen=True)
class TradeEvent:
    t: int
    date: date
    price: float
    action: Action
    realized_profit: float = 0.0


@dataclass
class TradeLedger:
    open_positions: deque = field(default_factory=deque)
    events: list[TradeEvent] = field(default_factory=list)
    total_profit: float = 0.0
    total_reward: float = 0.0


@dataclass(frozen=True)
class StepOutcome:
    next_state: MarketState
    reward: float
    done: bool
    event: TradeEvent


@dataclass(frozen=True)
class LiquidationReport:
    total_profit: float
    total_reward: float
    open_positions: int
    events: tuple[TradeEvent, ...]


def _window_features(closes: np.ndarray, t: int, window_size: int) -> np.ndarray:
    idx = np.arange(t - window_size, t + 1)
    prices = closes[np.maximum(idx, 0)]  # left-pad with the first close
    return sigmoid(np.diff(prices))


def make_state(series: PriceSeries, t: int, window_size: int) -> MarketState:
    if not 0 <= t < len(series):
        raise BadIndex(f"t={t} outside [0, {len(series)})")
    if window_size < 1:
        raise ValueError("window_size must be positive")
    return MarketState(np.atleast_1d(_window_features(series.closes, t, window_size)), t)


def state_matrix(series: PriceSeries, window_size: int) -> np.ndarray:
    """All states of ``series`` stacked row-wise; row ``t`` equals ``make_state(series, t).features``."""
    closes = series.closes
    n = len(closes)
    idx = np.arange(n)[:, None] + np.arange(-window_size, 1)[None, :]
    prices = closes[np.maximum(idx, 0)]
    return np.atleast_2d(sigmoid(np.diff(prices, axis=1))).reshape(n, window_size)


def env_reset(series: PriceSeries, window_size: int) -> tuple[MarketState, TradeLedger]:
    if len(series) <= window_size:
        raise TooShort(f"series of length {len(series)} needs more than {window_size} rows")
    return make_state(series, 0, window_size), TradeLedger()


def apply_action(
    series: PriceSeries,
    ledger: TradeLedger,
    t: int,
    action: Action | int,
    reward_fn: RewardFn = sign_reward,
) -> tuple[float, TradeEvent]:
    """Execute ``action`` at close ``t`` against ``ledger`` (mutated in place)."""
    action = Action(action)
    price = float(series.closes[t])
    day = series.dates[t]
    reward = 0.0
    if action is Action.BUY:
        ledger.open_positions.append(price)
        event = TradeEvent(t, day, price, Action.BUY)
    elif action is Action.SELL and ledger.open_positions:
        bought = ledger.open_positions.popleft()
        profit = price - bought
        reward = reward_fn(profit)
        ledger.total_profit += profit
        event = TradeEvent(t, day, price, Action.SELL, profit)
    else:
        event = TradeEvent(t, day, price, Action.HOLD)
    ledger.total_reward += reward
    ledger.events.append(event)
    return reward, event


def env_step(
    series: PriceSeries,
    ledger: TradeLedger,
    t: int,
    action: Action | int,
    window_size: int,
    reward_fn: RewardFn = sign_reward,
) -> StepOutcome:
    """Act at time ``t`` and advance to ``t + 1``; ``done`` once ``t + 1`` is the last index."""
    last = len(series) - 1
    if t >= last:
        raise EpisodeFinished(f"t={t} is at or past the final index {last}")
    if t < 0:
        raise BadIndex(f"t={t} is negative")
    reward, event = apply_action(series, ledger, t, action, reward_fn)
    return StepOutcome(make_state(series, t + 1, window_size), reward, t + 1 == last, event)


def liquidation_report(ledger: TradeLedger, series: PriceSeries | None = None) -> LiquidationReport:
    """Realized totals only; positions still open contribute nothing."""
    return LiquidationReport(
        total_profit=ledger.total_profit,
        total_reward=ledger.total_reward,
        open_positions=len(ledger.open_positions),
        events=tuple(ledger.events),
    )


def replay_actions(
    series: PriceSeries, actions, window_size: int, reward_fn: RewardFn = sign_reward
) -> LiquidationReport:
    """Run a recorded action sequence through a fresh episode."""
    _, ledger = env_reset(series, window_size)
    for t, action in enumerate(actions):
        outcome = env_step(series, ledger, t, action, window_size, reward_fn)
        if outcome.done:
            break
    return liquidation_report(ledger, series)


class TradingEnv:
    """Stateful wrapper around :func:`env_reset` / :func:`env_step`.

    States for every index are precomputed once, so stepping is cheap.
    """

    def __init__(self, series: PriceSeries, window_size: int, reward_fn: RewardFn = sign_reward):
        if len(series) <= window_size:
            raise TooShort(f"series of length {len(series)} needs more than {window_size} rows")
        self.series = series
        self.window_size = window_size
        self.reward_fn = reward_fn
        self.states = state_matrix(series, window_size)
        self.t = 0
        self.ledger = TradeLedger()
        self.done = False

    @property
    def n_steps(self) -> int:
        return len(self.series) - 1

    def reset(self) -> np.ndarray:
        self.t = 0
        self.ledger = TradeLedger()
        self.done = False
        return self.states[0]

    def step(self, action: Action | int) -> tuple[np.ndarray, float, bool, TradeEvent]:
        if self.done:
            raise EpisodeFinished("episode already finished; call reset()")
        reward, event = apply_action(self.series, self.ledger, self.t, action, self.reward_fn)
        self.t += 1
        self.done = self.t == len(self.series) - 1
        return self.states[self.t], reward, self.done, event

    def report(self) -> LiquidationReport:
        return liquidation_report(self.ledger, self.series)
