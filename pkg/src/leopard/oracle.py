"""Synthetic teachers: Bernoulli-sigmoid preferences and ranked demonstrations."""

from __future__ import annotations

import itertools
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import expit

from .agent import AgentConfig, Policy, evaluate_policy, train_agent
from .core import Fragment, Trajectory, make_fragment
from .env import EnvSpec, ground_truth_reward_table, shaped_reward_table, trajectory_return
from .errors import DegenerateFeedbackError, NoDataError
from .ordering import PartialOrdering, from_ranking

RewardFn = Callable[[Fragment], float]


def table_reward_fn(table: np.ndarray) -> RewardFn:
    """Fragment return under a ``[pos, action]`` reward table."""
    return lambda f: trajectory_return(table, f.traj, f.start, f.length)


def preference_reward_fn(spec: EnvSpec) -> RewardFn:
    """What the synthetic teacher judges by: shaped reward on cliff_walking, ground truth elsewhere."""
    table = shaped_reward_table(spec) if spec.name == "cliff_walking" else ground_truth_reward_table(spec)
    return table_reward_fn(table)


def sample_preference(
    a: Fragment, b: Fragment, reward_fn: RewardFn, rng: np.random.Generator
) -> tuple[Fragment, Fragment]:
    """Return ``(a, b)`` with probability ``sigmoid(R(a) - R(b))``, else ``(b, a)``."""
    if a == b:
        raise DegenerateFeedbackError("cannot compare a fragment with itself")
    p = expit(reward_fn(a) - reward_fn(b))
    return (a, b) if rng.random() < p else (b, a)


def _random_fragment(trajs: Sequence[Trajectory], length: int, rng: np.random.Generator) -> Fragment:
    t = trajs[int(rng.integers(len(trajs)))]
    return make_fragment(t, int(rng.integers(t.length - length + 1)), length)


def get_preferences(
    n: int,
    new_trajs: Sequence[Trajectory],
    pool: Sequence[Trajectory],
    fragment_len: int,
    reward_fn: RewardFn,
    rng: np.random.Generator,
    new_first: bool = True,
) -> list[tuple[Fragment, Fragment]]:
    """Sample ``n`` labelled fragment pairs.

    With ``new_first`` the first fragment comes from ``new_trajs`` and the
    second from ``new_trajs + pool``; otherwise both come from the union.
    """
    if n == 0:
        return []
    if not len(new_trajs):
        raise NoDataError("no new trajectories to sample preferences from")
    if any(fragment_len > t.length for t in new_trajs):
        raise NoDataError(f"fragment length {fragment_len} exceeds a trajectory length")
    combined = list(new_trajs) + list(pool)
    first_src = list(new_trajs) if new_first else combined
    out = []
    while len(out) < n:
        a = _random_fragment(first_src, fragment_len, rng)
        b = _random_fragment(combined, fragment_len, rng)
        if a == b:
            continue
        out.append(sample_preference(a, b, reward_fn, rng))
    return out


def ranking_by_return(trajs: Sequence[Trajectory], table: np.ndarray, beta: float = 1.0) -> PartialOrdering:
    """Total order by return under ``table``; ties keep list order (earlier ranks higher)."""
    frags = [t.whole() for t in trajs]
    if len(frags) == 1:
        return PartialOrdering(tuple(frags), frozenset(), beta)
    returns = [trajectory_return(table, t) for t in trajs]
    order = sorted(range(len(frags)), key=lambda i: (-returns[i], i))
    return from_ranking([frags[i] for i in order], beta)


def generate_demonstrations(
    spec: EnvSpec,
    n: int,
    polarity: str,
    rng: np.random.Generator,
    n_agents: int = 4,
    n_selected: int = 4,
    train_episodes: int = 400,
    config: AgentConfig | None = None,
    ids: Iterator[int] | None = None,
) -> tuple[list[Trajectory], PartialOrdering]:
    """Demonstrations from agents trained on the ground truth (or its negation).

    The best ``n_selected`` agents by final greedy return on their training
    reward contribute their training trajectories latest-first, interleaved
    with the best agent first; the first ``n`` are kept and ranked by
    ground-truth return.
    """
    if n < 1:
        raise ValueError("need at least one demonstration")
    if polarity not in ("positive", "negative"):
        raise ValueError(f"polarity must be 'positive' or 'negative', got {polarity!r}")
    ids = itertools.count() if ids is None else ids
    gt = ground_truth_reward_table(spec)
    train_table = gt if polarity == "positive" else -gt
    source = "demo_positive" if polarity == "positive" else "demo_negative"

    agents = []
    local_ids = itertools.count()
    for _ in range(n_agents):
        policy, trajs = train_agent(
            Policy.initial(spec), train_table, spec, train_episodes * spec.horizon, rng, config, local_ids, source,
        )
        agents.append((evaluate_policy(policy, spec, 1, train_table), trajs))
    order = sorted(range(n_agents), key=lambda i: -agents[i][0])[:n_selected]
    latest_first = [list(reversed(agents[i][1])) for i in order]
    interleaved = [t for group in itertools.zip_longest(*latest_first) for t in group if t is not None]
    chosen = [spec.make_trajectory(next(ids), t.states, t.actions, source) for t in interleaved[:n]]
    return chosen, ranking_by_return(chosen, gt)
