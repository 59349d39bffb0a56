"""Replay buffer, epsilon-greedy policy, Q-learning targets and the train/evaluate loops."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .env import N_ACTIONS, REWARD_FUNCTIONS, Action, TradeEvent, TradingEnv
from .market_data import PriceSeries
from .neural import (
    AdamState,
    Aggregation,
    Head,
    NetworkParams,
    NetworkSpec,
    adam_step,
    copy_params,
    forward,
    init_network,
    loss_and_gradients,
)


class AgentKind(str, Enum):
    DQN = "dqn"
    DOUBLE_DQN = "ddqn"
    DUELING_DDQN = "dueling"

    @property
    def uses_double_target(self) -> bool:
        return self is not AgentKind.DQN

    @property
    def head(self) -> Head:
        return Head.DUELING if self is AgentKind.DUELING_DDQN else Head.PLAIN

    @property
    def label(self) -> str:
        return {"dqn": "DQN", "ddqn": "Double DQN", "dueling": "Dueling DDQN"}[self.value]


@dataclass(frozen=True)
class Hyperparams:
    """Training configuration; defaults follow the published protocol where it gives one."""

    window_size: int = 90
    batch_size: int = 64
    episodes: int = 50
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_min: float = 0.1
    epsilon_decay: float = 0.995
    learning_rate: float = 0.00025
    optimizer: str = "adam"
    loss: str = "mse"
    replay_capacity: int = 10_000
    target_sync_interval: int = 100
    hidden_dims: tuple[int, ...] = (64, 32, 8)
    dueling_aggregation: str = "mean"
    reward: str = "sign"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        problems = []
        if not 0 < self.gamma < 1:
            problems.append(f"gamma={self.gamma} not in (0, 1)")
        if not 0 < self.epsilon_min <= self.epsilon_start <= 1:
            problems.append("need 0 < epsilon_min <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay < 1:
            problems.append(f"epsilon_decay={self.epsilon_decay} not in (0, 1)")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be positive")
        for name in ("window_size", "batch_size", "replay_capacity", "target_sync_interval"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be a positive integer")
        if self.episodes < 0:
            problems.append("episodes must be >= 0")
        if self.batch_size > self.replay_capacity:
            problems.append("batch_size exceeds replay_capacity")
        if self.optimizer != "adam":
            problems.append(f"optimizer {self.optimizer!r} unsupported (only 'adam')")
        if self.loss != "mse":
            problems.append(f"loss {self.loss!r} unsupported (only 'mse')")
        if self.reward not in REWARD_FUNCTIONS:
            problems.append(f"reward {self.reward!r} not in {sorted(REWARD_FUNCTIONS)}")
        try:
            Aggregation(self.dueling_aggregation)
        except ValueError:
            problems.append(f"unknown dueling_aggregation {self.dueling_aggregation!r}")
        if problems:
            raise ValueError("invalid hyperparameters: " + "; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_overrides(cls, overrides: dict | None = None) -> "Hyperparams":
        overrides = dict(overrides or {})
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return cls(**overrides)

    def network_spec(self, kind: AgentKind) -> NetworkSpec:
        return NetworkSpec(
            input_dim=self.window_size,
            hidden_dims=self.hidden_dims,
            output_dim=N_ACTIONS,
            head=kind.head,
            aggregation=Aggregation(self.dueling_aggregation),
        )


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass(frozen=True)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Batch":
        return cls(
            states=np.array([t.state for t in transitions], dtype=np.float64),
            actions=np.array([int(t.action) for t in transitions], dtype=np.intp),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_states=np.array([t.next_state for t in transitions], dtype=np.float64),
            dones=np.array([t.done for t in transitions], dtype=bool),
        )


class Underfilled(RuntimeError):
    pass


class ReplayBuffer:
    """Fixed-capacity ring of transitions backed by preallocated arrays."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def push(self, transition: Transition) -> None:
        i = self.inserted % self.capacity
        self.states[i] = transition.state
        self.actions[i] = int(transition.action)
        self.rewards[i] = transition.reward
        self.next_states[i] = transition.next_state
        self.dones[i] = transition.done
        self.inserted += 1

    def _take(self, idx: np.ndarray) -> Batch:
        return Batch(
            self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx]
        )

    def contents(self) -> Batch:
        """Stored transitions, oldest first."""
        n = len(self)
        start = self.inserted - n
        return self._take((start + np.arange(n)) % self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample without replacement."""
        if len(self) < batch_size:
            raise Underfilled(f"{len(self)} transitions stored, batch of {batch_size} requested")
        return self._take(rng.choice(len(self), size=batch_size, replace=False))


def buffer_push(buffer: ReplayBuffer, transition: Transition) -> None:
    buffer.push(transition)


def buffer_sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> Batch:
    return buffer.sample(batch_size, rng)


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if epsilon > 0 and rng.random() < epsilon:
        return Action(int(rng.integers(N_ACTIONS)))
    return Action(int(np.argmax(q_values)))


def dqn_target(batch: Batch, target_params: NetworkParams, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')``, or ``r`` on terminal transitions."""
    next_q = forward(target_params, batch.next_states)
    bootstrap = next_q.max(axis=1)
    return np.where(batch.dones, batch.rewards, batch.rewards + gamma * bootstrap)


def double_dqn_target(
    batch: Batch, main_params: NetworkParams, target_params: NetworkParams, gamma: float
) -> np.ndarray:
    """The main network picks ``a*`` on the next state, the target network values it."""
    best = forward(main_params, batch.next_states).argmax(axis=1)
    next_q = forward(target_params, batch.next_states)
    bootstrap = next_q[np.arange(len(best)), best]
    return np.where(batch.dones, batch.rewards, batch.rewards + gamma * bootstrap)


@dataclass
class EpisodeMetrics:
    episode: int
    total_reward: float
    total_profit: float
    mean_loss: float
    epsilon_end: float


METRIC_COLUMNS = tuple(f.name for f in fields(EpisodeMetrics))


class Agent:
    """Main/target Q-network pair with its optimizer, replay memory and exploration state."""

    def __init__(self, kind: AgentKind | str, hp: Hyperparams, seed: int = 0):
        self.kind = AgentKind(kind)
        self.hp = hp
        init_seq, policy_seq, replay_seq = np.random.SeedSequence(seed).spawn(3)
        self.policy_rng = np.random.default_rng(policy_seq)
        self.replay_rng = np.random.default_rng(replay_seq)
        self.main = init_network(hp.network_spec(self.kind), np.random.default_rng(init_seq))
        self.target = copy_params(self.main)
        self.opt = AdamState.for_params(self.main, learning_rate=hp.learning_rate)
        self.buffer = ReplayBuffer(hp.replay_capacity, hp.window_size)
        self.epsilon = hp.epsilon_start
        self.updates = 0

    def act(self, state: np.ndarray, epsilon: float | None = None) -> Action:
        eps = self.epsilon if epsilon is None else epsilon
        return select_action(forward(self.main, state), eps, self.policy_rng)

    def remember(self, transition: Transition) -> None:
        self.buffer.push(transition)

    def compute_targets(self, batch: Batch) -> np.ndarray:
        if self.kind.uses_double_target:
            return double_dqn_target(batch, self.main, self.target, self.hp.gamma)
        return dqn_target(batch, self.target, self.hp.gamma)

    def replay_update(self) -> float:
        """One minibatch gradient step; returns the batch loss before the update."""
        batch = self.buffer.sample(self.hp.batch_size, self.replay_rng)
        targets = self.compute_targets(batch)
        loss, grads = loss_and_gradients(self.main, batch.states, batch.actions, targets)
        adam_step(self.main, grads, self.opt)
        self.epsilon = max(self.hp.epsilon_min, self.epsilon * self.hp.epsilon_decay)
        self.updates += 1
        if self.updates % self.hp.target_sync_interval == 0:
            self.sync_target()
        return loss

    def sync_target(self) -> None:
        self.target = copy_params(self.main)


def replay_update(agent: Agent, hp: Hyperparams | None = None) -> float:
    if hp is not None and hp is not agent.hp:
        raise ValueError("agent was built with different hyperparameters")
    return agent.replay_update()


@dataclass
class TrainResult:
    agent: Agent
    metrics: list[EpisodeMetrics] = field(default_factory=list)

    @property
    def params(self) -> NetworkParams:
        return self.agent.main

    @property
    def last(self) -> EpisodeMetrics | None:
        return self.metrics[-1] if self.metrics else None

    @property
    def cumulative_reward(self) -> float:
        return math.fsum(m.total_reward for m in self.metrics)

    @property
    def cumulative_profit(self) -> float:
        return math.fsum(m.total_profit for m in self.metrics)


def train(
    series: PriceSeries,
    kind: AgentKind | str,
    hp: Hyperparams = Hyperparams(),
    seed: int = 0,
    on_episode: Callable[[EpisodeMetrics], None] | None = None,
) -> TrainResult:
    agent = Agent(kind, hp, seed)
    env = TradingEnv(series, hp.window_size, REWARD_FUNCTIONS[hp.reward])
    result = TrainResult(agent)
    for episode in range(1, hp.episodes + 1):
        state = env.reset()
        losses = []
        done = False
        while not done:
            action = agent.act(state)
            next_state, reward, done, _ = env.step(action)
            agent.remember(Transition(state, action, reward, next_state, done))
            if len(agent.buffer) >= hp.batch_size:
                losses.append(agent.replay_update())
            state = next_state
        report = env.report()
        metrics = EpisodeMetrics(
            episode=episode,
            total_reward=report.total_reward,
            total_profit=report.total_profit,
            mean_loss=float(np.mean(losses)) if losses else float("nan"),
            epsilon_end=agent.epsilon,
        )
        result.metrics.append(metrics)
        if on_episode is not None:
            on_episode(metrics)
    return result


@dataclass(frozen=True)
class EvalResult:
    total_reward: float
    total_profit: float
    open_positions: int
    events: tuple[TradeEvent, ...]


def run_policy(
    series: PriceSeries,
    policy: Callable[[np.ndarray, int], Action | int],
    hp: Hyperparams = Hyperparams(),
) -> EvalResult:
    """One pass over ``series`` choosing each action with ``policy(state, t)``."""
    env = TradingEnv(series, hp.window_size, REWARD_FUNCTIONS[hp.reward])
    state = env.reset()
    done = False
    while not done:
        state, _, done, _ = env.step(policy(state, env.t))
    report = env.report()
    return EvalResult(report.total_reward, report.total_profit, report.open_positions, report.events)


def evaluate(
    series: PriceSeries,
    params: NetworkParams,
    kind: AgentKind | str | None = None,
    hp: Hyperparams = Hyperparams(),
) -> EvalResult:
    """Greedy (epsilon = 0) pass with no learning; ``kind`` is only checked against the network head."""
    if kind is not None and AgentKind(kind).head is not params.spec.head:
        raise ValueError(f"{AgentKind(kind).value} agent expects a {AgentKind(kind).head.value} network")
    env = TradingEnv(series, hp.window_size, REWARD_FUNCTIONS[hp.reward])
    greedy = forward(params, env.states).argmax(axis=1)
    return run_policy(series, lambda _state, t: int(greedy[t]), hp)
