"""Dense Q-networks in numpy: forward, MSE loss, backprop, Adam, checkpoints.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch of row
vectors maps through ``x @ W + b``. A plain network is a single ReLU stack
with a linear output. A dueling network has a ReLU trunk feeding a value
stream (one output) and an advantage stream (one output per action), merged
by :func:`combine_dueling`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "qtrader-checkpoint/1"


class Head(str, Enum):
    PLAIN = "plain"
    DUELING = "dueling"


class Aggregation(str, Enum):
    MAX = "max"  # Q = V + (A - max A)
    NAIVE = "naive"  # Q = V + A
    MEAN = "mean"  # Q = V + (A - mean A)


class ShapeMismatch(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 32, 8)
    output_dim: int = 3
    head: Head = Head.PLAIN
    aggregation: Aggregation = Aggregation.MEAN

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "head", Head(self.head))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"layer sizes must be positive: {self}")

    def stack_dims(self) -> dict[str, list[int]]:
        """Layer widths of each stack, input first."""
        if self.head is Head.PLAIN:
            return {"trunk": [self.input_dim, *self.hidden_dims, self.output_dim]}
        trunk = [self.input_dim, *self.hidden_dims[:-1]]
        stream = list(self.hidden_dims[-1:])
        return {
            "trunk": trunk,
            "value": [trunk[-1], *stream, 1],
            "advantage": [trunk[-1], *stream, self.output_dim],
        }

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "head": self.head.value,
            "aggregation": self.aggregation.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            input_dim=d["input_dim"],
            hidden_dims=tuple(d["hidden_dims"]),
            output_dim=d["output_dim"],
            head=Head(d["head"]),
            aggregation=Aggregation(d["aggregation"]),
        )


@dataclass
class Dense:
    W: np.ndarray
    b: np.ndarray


STACKS = ("trunk", "value", "advantage")


@dataclass
class NetworkParams:
    """Weights of one Q-network. Gradients use the same container."""

    spec: NetworkSpec
    trunk: list[Dense]
    value: list[Dense] = field(default_factory=list)
    advantage: list[Dense] = field(default_factory=list)

    def layers(self):
        for name in STACKS:
            yield from getattr(self, name)

    def arrays(self) -> list[np.ndarray]:
        """Every parameter array in layer order (trunk, value, advantage; W before b)."""
        out = []
        for layer in self.layers():
            out.extend((layer.W, layer.b))
        return out

    def copy(self) -> "NetworkParams":
        return _map_params(self, np.array)

    def zeros_like(self) -> "NetworkParams":
        return _map_params(self, np.zeros_like)

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def _map_params(params: NetworkParams, fn) -> NetworkParams:
    stacks = {
        name: [Dense(fn(l.W), fn(l.b)) for l in getattr(params, name)] for name in STACKS
    }
    return NetworkParams(params.spec, **stacks)


def init_network(spec: NetworkSpec, rng: np.random.Generator | int | None = None) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(rng)
    stacks = {}
    for name, dims in spec.stack_dims().items():
        layers = []
        for fan_in, fan_out in zip(dims, dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(Dense(rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
        stacks[name] = layers
    return NetworkParams(spec, **stacks)


def copy_params(source: NetworkParams) -> NetworkParams:
    return source.copy()


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _stack_forward(layers: list[Dense], x: np.ndarray, linear_out: bool):
    """Returns the stack output and the (input, pre-activation) pair of each layer."""
    cache = []
    h = x
    for i, layer in enumerate(layers):
        z = h @ layer.W + layer.b
        cache.append((h, z))
        h = z if (linear_out and i == len(layers) - 1) else relu(z)
    return h, cache


def _stack_backward(layers: list[Dense], cache, grad_out: np.ndarray, linear_out: bool):
    grads = []
    g = grad_out
    for i in reversed(range(len(layers))):
        h, z = cache[i]
        if not (linear_out and i == len(layers) - 1):
            g = g * (z > 0)
        grads.append(Dense(h.T @ g, g.sum(axis=0)))
        g = g @ layers[i].W.T
    grads.reverse()
    return grads, g


def combine_dueling(v, a, mode: Aggregation | str = Aggregation.MEAN) -> np.ndarray:
    """Merge state value ``v`` (shape ``(B,)``/``(B,1)`` or scalar) with advantages ``a`` (``(B,A)`` or ``(A,)``)."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("advantage vector is empty")
    v = np.asarray(v, dtype=np.float64)
    if a.ndim == 2:
        v = v.reshape(-1, 1)
    mode = Aggregation(mode)
    if mode is Aggregation.MAX:
        return v + (a - a.max(axis=-1, keepdims=True))
    if mode is Aggregation.MEAN:
        return v + (a - a.mean(axis=-1, keepdims=True))
    return v + a


def _aggregation_jacobian(a: np.ndarray, mode: Aggregation) -> np.ndarray:
    """d(aggregate of a)/da per row; lowest index wins ties for MAX."""
    if mode is Aggregation.MEAN:
        return np.full_like(a, 1.0 / a.shape[1])
    if mode is Aggregation.MAX:
        onehot = np.zeros_like(a)
        onehot[np.arange(a.shape[0]), a.argmax(axis=1)] = 1.0
        return onehot
    return np.zeros_like(a)


def _as_batch(params: NetworkParams, states) -> tuple[np.ndarray, bool]:
    x = np.asarray(getattr(states, "features", states), dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ShapeMismatch(f"expected input width {params.spec.input_dim}, got shape {x.shape}")
    return x, single


def _forward_cached(params: NetworkParams, x: np.ndarray):
    if params.spec.head is Head.PLAIN:
        q, cache = _stack_forward(params.trunk, x, linear_out=True)
        return q, {"trunk": cache}
    h, trunk_cache = _stack_forward(params.trunk, x, linear_out=False)
    v, value_cache = _stack_forward(params.value, h, linear_out=True)
    a, adv_cache = _stack_forward(params.advantage, h, linear_out=True)
    q = combine_dueling(v[:, 0], a, params.spec.aggregation)
    return q, {"trunk": trunk_cache, "value": value_cache, "advantage": adv_cache, "a": a}


def forward(params: NetworkParams, states) -> np.ndarray:
    """Q-values for one state (``(A,)``) or a batch of states (``(B, A)``)."""
    x, single = _as_batch(params, states)
    q, _ = _forward_cached(params, x)
    return q[0] if single else q


def mse_loss(predicted, target) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ShapeMismatch(f"predicted {predicted.shape} vs target {target.shape}")
    if predicted.size == 0:
        raise EmptyBatch("mse_loss of an empty batch")
    return float(np.mean((target - predicted) ** 2))


def loss_and_gradients(params: NetworkParams, states, actions, targets) -> tuple[float, NetworkParams]:
    """MSE between ``targets`` and the Q-value of each taken action, and its exact gradient.

    Only the taken action's output carries error back into the network.
    """
    x, _ = _as_batch(params, states)
    actions = np.asarray(actions, dtype=np.intp).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    batch = x.shape[0]
    if batch == 0:
        raise EmptyBatch("empty batch")
    if actions.shape[0] != batch or targets.shape[0] != batch:
        raise ShapeMismatch(
            f"batch of {batch} states with {actions.shape[0]} actions and {targets.shape[0]} targets"
        )

    q, cache = _forward_cached(params, x)
    rows = np.arange(batch)
    predicted = q[rows, actions]
    loss = mse_loss(predicted, targets)

    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * (predicted - targets) / batch

    if params.spec.head is Head.PLAIN:
        trunk_grads, _ = _stack_backward(params.trunk, cache["trunk"], dq, linear_out=True)
        return loss, NetworkParams(params.spec, trunk_grads)

    total = dq.sum(axis=1, keepdims=True)
    dv = total
    da = dq - total * _aggregation_jacobian(cache["a"], params.spec.aggregation)
    value_grads, dh_v = _stack_backward(params.value, cache["value"], dv, linear_out=True)
    adv_grads, dh_a = _stack_backward(params.advantage, cache["advantage"], da, linear_out=True)
    trunk_grads, _ = _stack_backward(params.trunk, cache["trunk"], dh_v + dh_a, linear_out=False)
    return loss, NetworkParams(params.spec, trunk_grads, value_grads, adv_grads)


def backward(params: NetworkParams, states, actions, targets) -> NetworkParams:
    return loss_and_gradients(params, states, actions, targets)[1]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    learning_rate: float = 0.00025
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams, learning_rate: float = 0.00025, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            learning_rate=learning_rate,
            **kw,
        )


def adam_step(
    params: NetworkParams, grads: NetworkParams, opt: AdamState
) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update, applied in place; returns ``(params, opt)`` for chaining."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(opt.m):
        raise ShapeMismatch("parameter, gradient and optimizer layouts differ")
    opt.t += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1**opt.t
    c2 = 1.0 - b2**opt.t
    for p, g, m, v in zip(p_arrays, g_arrays, opt.m, opt.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return params, opt


def save_checkpoint(path: str | Path, params: NetworkParams, metadata: dict | None = None) -> Path:
    path = Path(path)
    meta = {"format": CHECKPOINT_FORMAT, "spec": params.spec.to_dict(), "metadata": metadata or {}}
    arrays = {f"arr_{i:03d}": a for i, a in enumerate(params.arrays())}
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[NetworkParams, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        spec = NetworkSpec.from_dict(meta["spec"])
        params = init_network(spec, 0)
        stored = [data[f"arr_{i:03d}"] for i in range(len(params.arrays()))]
    for target, arr in zip(params.arrays(), stored):
        if target.shape != arr.shape:
            raise ShapeMismatch(f"checkpoint array {arr.shape} does not fit {target.shape}")
        target[...] = arr
    return params, meta["metadata"]
