"""Tabular Q-learning against a learned reward, and random rollouts."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import _kernels
from .core import Trajectory
from .env import EnvSpec, ground_truth_reward_table, trajectory_return
from .errors import BudgetError, NumericError
from .reward import RewardModel, TransitionBatch


@dataclass
class AgentConfig:
    lr: float = 0.1
    gamma: float = 0.99
    temp_start: float = 1.0
    temp_end: float = 0.1
    # Learned rewards are only identified up to shift and scale: the agent sees
    # them averaged over timesteps (its table is position-only), shifted so the
    # best transition is 0 and scaled to unit std. Fixed-horizon episodes make
    # the shift policy-invariant, and the max-0 shift keeps a zero Q-table optimistic.
    time_average: bool = True
    standardize: bool = True


@dataclass
class Policy:
    q_table: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not np.all(np.isfinite(self.q_table)):
            raise NumericError("non-finite Q-table")

    @classmethod
    def initial(cls, spec: EnvSpec, temperature: float = 1.0) -> "Policy":
        return cls(np.zeros((spec.n_states, spec.action_count)), temperature)

    def greedy(self) -> np.ndarray:
        return np.argmax(self.q_table, axis=1)


def _episodes(spec: EnvSpec, n_steps: int) -> int:
    if n_steps < spec.horizon:
        raise BudgetError(f"budget of {n_steps} steps is below the horizon {spec.horizon}")
    return n_steps // spec.horizon


def _to_trajectories(spec, states, actions, ids, source):
    return [spec.make_trajectory(next(ids), states[i], actions[i], source) for i in range(states.shape[0])]


def random_rollouts(
    spec: EnvSpec, n_steps: int, rng: np.random.Generator, ids: Iterator[int] | None = None
) -> list[Trajectory]:
    """``n_steps // horizon`` episodes of uniformly random actions."""
    n_ep = _episodes(spec, n_steps)
    ids = itertools.count() if ids is None else ids
    actions = rng.integers(0, spec.action_count, size=(n_ep, spec.horizon))
    states = np.zeros((n_ep, spec.horizon + 1), dtype=np.int64)
    nxt, _ = spec.tables
    _kernels.random_episodes(np.ascontiguousarray(nxt), spec.start, spec.horizon, actions, states)
    return _to_trajectories(spec, states, actions, ids, "random")


def model_reward_table(model: RewardModel, spec: EnvSpec) -> np.ndarray:
    """``R[t, pos, action]`` under the learned model for every reachable transition shape."""
    H, S, A = spec.horizon, spec.n_states, spec.action_count
    if model.kind == "tabular":
        table = np.broadcast_to(model.table[:S, :A], (H, S, A)).copy()
    else:
        nxt, _ = spec.tables
        t = np.repeat(np.arange(H), S * A)
        pos = np.tile(np.repeat(np.arange(S), A), H)
        act = np.tile(np.arange(A), H * S)
        batch = TransitionBatch(
            pos, act, spec.features(pos, t), spec.features(nxt[pos, act], t + 1),
            np.arange(H * S * A), np.ones(H * S * A, dtype=np.int64),
        )
        table = model.transition_rewards(batch).reshape(H, S, A)
    bad = np.argwhere(~np.isfinite(table))
    if bad.size:
        t, s, a = bad[0]
        raise NumericError(f"non-finite model reward at timestep {t}, cell {s}, action {a}")
    return np.ascontiguousarray(table)


def agent_reward_table(model: RewardModel, spec: EnvSpec, config: AgentConfig | None = None) -> np.ndarray:
    """The ``[t, pos, action]`` table Q-learning consumes for a learned model."""
    cfg = config or AgentConfig()
    table = model_reward_table(model, spec)
    if cfg.time_average:
        table = np.broadcast_to(table.mean(axis=0), table.shape)
    if cfg.standardize:
        table = table - table.max()
        std = table.std()
        if std > 0:
            table = table / std
    return np.ascontiguousarray(table)


def train_agent(
    policy: Policy,
    reward_model: RewardModel | np.ndarray,
    spec: EnvSpec,
    n_steps: int,
    rng: np.random.Generator,
    config: AgentConfig | None = None,
    ids: Iterator[int] | None = None,
    source: str = "agent",
) -> tuple[Policy, list[Trajectory]]:
    """Q-learning for ``n_steps // horizon`` episodes on rewards from ``reward_model``.

    ``reward_model`` may also be a precomputed ``[pos, action]`` or
    ``[t, pos, action]`` table, used as is. Returns a new policy (warm-started from
    ``policy``) and every trajectory generated while training.
    """
    cfg = config or AgentConfig()
    n_ep = _episodes(spec, n_steps)
    ids = itertools.count() if ids is None else ids
    if isinstance(reward_model, RewardModel):
        table = agent_reward_table(reward_model, spec, cfg)
    else:
        table = np.asarray(reward_model, dtype=np.float64)
        if table.ndim == 2:
            table = np.broadcast_to(table, (spec.horizon, *table.shape))
        table = np.ascontiguousarray(table)
        if not np.all(np.isfinite(table)):
            raise NumericError("non-finite reward table")
    q = policy.q_table.copy()
    uniforms = rng.random(n_ep * spec.horizon)
    states = np.zeros((n_ep, spec.horizon + 1), dtype=np.int64)
    actions = np.zeros((n_ep, spec.horizon), dtype=np.int64)
    nxt, _ = spec.tables
    _kernels.q_learning_episodes(
        q, table, np.ascontiguousarray(nxt), spec.start, spec.horizon, n_ep,
        cfg.lr, cfg.gamma, cfg.temp_start, cfg.temp_end, uniforms, states, actions,
    )
    return Policy(q, cfg.temp_end), _to_trajectories(spec, states, actions, ids, source)


def greedy_rollout(policy: Policy, spec: EnvSpec, uid: int = 0) -> Trajectory:
    states = np.zeros(spec.horizon + 1, dtype=np.int64)
    actions = np.zeros(spec.horizon, dtype=np.int64)
    nxt, _ = spec.tables
    _kernels.greedy_episode(policy.q_table, np.ascontiguousarray(nxt), spec.start, spec.horizon, states, actions)
    return spec.make_trajectory(uid, states, actions)


def evaluate_policy(policy: Policy, spec: EnvSpec, n_rollouts: int = 8, table: np.ndarray | None = None) -> float:
    """Mean ground-truth return of greedy rollouts (the grid is deterministic, so all rollouts coincide)."""
    table = ground_truth_reward_table(spec) if table is None else table
    returns = [trajectory_return(table, greedy_rollout(policy, spec)) for _ in range(n_rollouts)]
    return float(np.mean(returns))
