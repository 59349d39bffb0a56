"""
Training a DQN on a sawtooth price
==================================

A deterministic sawtooth (period 20, amplitude 10) is the smallest series on
which a trader can obviously make money: buy low in the ramp, sell before the
drop. Trains a DQN with the default hyperparameters for 30 episodes and plots
per-episode loss and reward when matplotlib is available.
"""

import numpy as np

from qtrader.agent import Hyperparams, evaluate, train
from qtrader.market_data import PriceSeries

t = np.arange(500)
series = PriceSeries.from_closes(100 + 10 * (t % 20) / 19, symbol="SAW")

hp = Hyperparams(episodes=30)
result = train(series, "dqn", hp, seed=0, on_episode=lambda m: print(
    f"episode {m.episode:2d}  reward {m.total_reward:6.0f}  profit {m.total_profit:8.2f}  "
    f"loss {m.mean_loss:.4f}  eps {m.epsilon_end:.3f}"))

greedy = evaluate(series, result.params, "dqn", hp)
print(f"greedy pass: reward {greedy.total_reward:.0f}, profit {greedy.total_profit:.2f}")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    episodes = [m.episode for m in result.metrics]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
    ax1.plot(episodes, [m.mean_loss for m in result.metrics])
    ax1.set(xlabel="episode", ylabel="mean MSE loss", title="train loss")
    ax2.plot(episodes, [m.total_reward for m in result.metrics])
    ax2.set(xlabel="episode", ylabel="total reward", title="train rewards")
    fig.tight_layout()
    fig.savefig("sawtooth_training.png", dpi=120)
    print("wrote sawtooth_training.png")
