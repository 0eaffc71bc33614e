"""Multi-critic PPO with decaying action priors."""

from .env import ChainEnvs, reference_state_init
from .gae import combine_advantages, compute_gae
from .rollout import RolloutBuffer, collect_rollout
from .train import METRIC_COLUMNS, TrainResult, build_agent, read_metrics, train, write_metrics
from .update import Learner, UpdateStats, compute_advantages, ppo_update

__all__ = [
    "ChainEnvs", "reference_state_init", "combine_advantages", "compute_gae", "RolloutBuffer",
    "collect_rollout", "METRIC_COLUMNS", "TrainResult", "build_agent", "read_metrics", "train",
    "write_metrics", "Learner", "UpdateStats", "compute_advantages", "ppo_update",
]
