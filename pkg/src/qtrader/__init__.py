"""Deep Q-learning stock-trading agents (DQN, Double DQN, Dueling Double DQN) in numpy."""

from .agent import (
    Agent,
    AgentKind,
    EpisodeMetrics,
    EvalResult,
    Hyperparams,
    ReplayBuffer,
    Transition,
    double_dqn_target,
    dqn_target,
    evaluate,
    select_action,
    train,
)
from .env import Action, MarketState, TradeEvent, TradeLedger, TradingEnv, env_reset, env_step, make_state, sigmoid
from .harness import ExperimentConfig, RunReport, emit_summary_table, emit_trade_profile, run_experiments
from .market_data import PriceSeries, SplitSpec, load_csv, split_series, write_csv
from .neural import (
    AdamState,
    Aggregation,
    Head,
    NetworkParams,
    NetworkSpec,
    adam_step,
    backward,
    combine_dueling,
    copy_params,
    forward,
    init_network,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
)

__version__ = "0.1.0"
