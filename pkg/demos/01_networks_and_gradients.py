"""
Q-networks, dueling heads and gradient checks
==============================================

Builds a plain and a dueling Q-network, shows how the three dueling
aggregations shape the Q-values, and checks backprop against central
finite differences.
"""

import numpy as np

from qtrader.neural import (
    Aggregation,
    Head,
    NetworkSpec,
    backward,
    combine_dueling,
    forward,
    init_network,
)

rng = np.random.default_rng(0)

# default trunk: 90 -> 64 -> 32 -> 8 -> 3
plain = init_network(NetworkSpec(90), rng)
print("plain layers:", [layer.W.shape for layer in plain.trunk])

# the dueling net splits after the 32-unit layer into value and advantage streams
dueling = init_network(NetworkSpec(90, head=Head.DUELING), rng)
print("value stream:", [l.W.shape for l in dueling.value])
print("advantage stream:", [l.W.shape for l in dueling.advantage])

state = rng.uniform(size=90)
print("Q(plain)  =", forward(plain, state))
print("Q(dueling)=", forward(dueling, state))

# %%
# Aggregations. Max-subtraction pins the best action's Q to V; mean-subtraction
# centres the advantages; the naive sum is unidentifiable (shift A, shift V back).
v, a = 1.5, np.array([0.2, -0.4, 0.9])
for mode in Aggregation:
    print(f"{mode.value:>5}: {combine_dueling(v, a, mode)}")

# %%
# Finite-difference check on a small dueling net.
spec = NetworkSpec(4, (5, 6), 3, Head.DUELING, Aggregation.MAX)
net = init_network(spec, rng)
x = rng.uniform(size=(8, 4))
actions = rng.integers(0, 3, size=8)
targets = rng.normal(size=8)


def loss(p):
    q = forward(p, x)[np.arange(8), actions]
    return np.mean((targets - q) ** 2)


analytic = backward(net, x, actions, targets).arrays()
h = 1e-5
worst = 0.0
for arr, g in zip(net.arrays(), analytic):
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + h
        up = loss(net)
        arr[idx] = orig - h
        down = loss(net)
        arr[idx] = orig
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
print(f"max relative error vs finite differences: {worst:.2e}")
