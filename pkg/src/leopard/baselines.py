"""Alternative likelihoods: Bradley-Terry, Sum-of-Choices and Choose-Best-Average.

Rationality coefficients are fixed at 1 throughout.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import Fragment, TrajectoryPool
from .errors import NoFeedbackError
from .reward import RewardModel, fragment_rewards, gradient

ALT_MODELS = ("bradley_terry", "sum_of_choices", "choose_best_average")


def _frags(pool: TrajectoryPool | Iterable[Fragment]) -> list[Fragment]:
    return pool.fragments() if isinstance(pool, TrajectoryPool) else list(pool)


def bradley_terry_logprob(a: Fragment, b: Fragment, m: RewardModel) -> float:
    """log P(a preferred to b)."""
    ra, rb = fragment_rewards(m, [a, b])
    return float(-np.logaddexp(0.0, rb - ra))


def soc_loss_from_rewards(pos_rewards: Sequence[float], agent_rewards: Sequence[float]) -> float:
    pos = np.asarray(pos_rewards, dtype=np.float64)
    agent = np.asarray(agent_rewards, dtype=np.float64)
    if not pos.size or not agent.size:
        raise NoFeedbackError("Sum-of-Choices needs positive demos and agent trajectories")
    return float(logsumexp(np.concatenate([pos, agent])) - logsumexp(pos))


def cba_loss_from_rewards(pos_rewards: Sequence[float], agent_rewards: Sequence[float]) -> float:
    pos = np.asarray(pos_rewards, dtype=np.float64)
    agent = np.asarray(agent_rewards, dtype=np.float64)
    if not pos.size or not agent.size:
        raise NoFeedbackError("Choose-Best-Average needs positive demos and agent trajectories")
    return float(np.logaddexp(0.0, agent.mean() - pos.mean()))


def _pool_rewards(d_pos, d_agent, m):
    pos, agent = _frags(d_pos), _frags(d_agent)
    if not pos or not agent:
        raise NoFeedbackError("both pools must be non-empty")
    r = fragment_rewards(m, pos + agent)
    return pos, agent, r[: len(pos)], r[len(pos) :]


def soc_loss(d_pos, d_agent, m: RewardModel) -> float:
    _, _, rp, ra = _pool_rewards(d_pos, d_agent, m)
    return soc_loss_from_rewards(rp, ra)


def cba_loss(d_pos, d_agent, m: RewardModel) -> float:
    _, _, rp, ra = _pool_rewards(d_pos, d_agent, m)
    return cba_loss_from_rewards(rp, ra)


def soc_neg_gradient(d_pos, d_agent, m: RewardModel) -> np.ndarray:
    """-dL_SoC/dtheta by backpropagating the loss straight through the reward model."""
    pos, agent, rp, ra = _pool_rewards(d_pos, d_agent, m)
    r_all = np.concatenate([rp, ra])
    p_all = np.exp(r_all - logsumexp(r_all))
    p_pos = np.exp(rp - logsumexp(rp))
    dl_dr = p_all.copy()
    dl_dr[: len(pos)] -= p_pos
    return -gradient(m, list(zip(pos + agent, dl_dr)))


def soc_factored_gradient(d_pos, d_agent, m: RewardModel) -> np.ndarray:
    """The same quantity in factored form.

    sum_a P(a | pos+agent) * (sum_p P(p | pos) * dR(p) - dR(a)),
    with every dR assembled from single-fragment gradients.
    """
    pos, agent, rp, ra = _pool_rewards(d_pos, d_agent, m)
    dR = {f: gradient(m, [(f, 1.0)]) for f in pos + agent}
    lse_all = logsumexp(np.concatenate([rp, ra]))
    lse_pos = logsumexp(rp)
    pulled_up = sum(math.exp(r - lse_pos) * dR[f] for f, r in zip(pos, rp))
    out = np.zeros(m.n_params)
    for f, r in zip(agent, ra):
        out += math.exp(r - lse_all) * (pulled_up - dR[f])
    return out


def verify_soc_gradient_identity(d_pos, d_agent, m: RewardModel) -> float:
    """Max abs elementwise gap between the direct and factored SoC gradients."""
    return float(np.max(np.abs(soc_neg_gradient(d_pos, d_agent, m) - soc_factored_gradient(d_pos, d_agent, m))))


def counterexample_theorem2(r1: float, r2: float, epsilon: float) -> tuple[float, float, float]:
    """Agent reward that pins the Sum-of-Choices loss at ``epsilon``.

    Returns ``(r_a, loss, r1 - r_a)``; the gap falls without bound as ``r2`` grows.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    r_a = math.log(math.expm1(epsilon)) + float(np.logaddexp(r1, r2))
    return r_a, soc_loss_from_rewards([r1, r2], [r_a]), r1 - r_a


def counterexample_theorem3(r1: float, r2: float, epsilon: float) -> tuple[float, float, float]:
    """Choose-Best-Average analogue of :func:`counterexample_theorem2`."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    r_a = math.log(math.expm1(epsilon)) + 0.5 * (r1 + r2)
    return r_a, cba_loss_from_rewards([r1, r2], [r_a]), r1 - r_a
