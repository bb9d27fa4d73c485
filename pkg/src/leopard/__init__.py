"""Reward learning from mixed feedback via partial orderings over trajectories."""

from ._jit import NUMBA_ENABLED
from .core import Fragment, Trajectory, TrajectoryPool, Transition, make_fragment
from .driver import ExperimentConfig, IterationRecord, leopard_run, mixture_configs, sweep
from .env import EnvSpec
from .ordering import FeedbackDatasets, PartialOrdering
from .reward import RewardModel
from .rrpo import TrainConfig, combined_loss, rrpo_nll, train_reward_model

__all__ = [
    "NUMBA_ENABLED",
    "EnvSpec",
    "ExperimentConfig",
    "FeedbackDatasets",
    "Fragment",
    "IterationRecord",
    "PartialOrdering",
    "RewardModel",
    "TrainConfig",
    "Trajectory",
    "TrajectoryPool",
    "Transition",
    "combined_loss",
    "leopard_run",
    "make_fragment",
    "mixture_configs",
    "rrpo_nll",
    "sweep",
    "train_reward_model",
]
