"""Hot inner loops.

Each kernel is written once in a numba-compatible subset of Python/numpy and
compiled with ``njit`` unless ``LEOPARD_DISABLE_NUMBA`` is set, in which case
the same source runs interpreted. Randomness never happens inside a kernel:
callers pass pre-drawn uniforms so both paths consume identical streams.
"""

import numpy as np

from ._jit import njit


@njit
def choice_terms(z, pred, weights):
    """Per-item Boltzmann choice NLL and its weighted gradient.

    ``z[i]`` is ``beta * R(item_i)``; ``pred[k, i]`` is True iff ``k < i``.
    Item ``i`` is chosen out of itself and its predecessors. Items with no
    predecessors contribute exactly zero. Returns ``(nll, has_pred, dz)``
    where ``dz`` is the gradient of ``sum_i weights[i] * nll[i]``.
    """
    n = z.shape[0]
    nll = np.zeros(n)
    has = np.zeros(n, dtype=np.bool_)
    dz = np.zeros(n)
    for i in range(n):
        zmax = z[i]
        cnt = 0
        for k in range(n):
            if pred[k, i]:
                cnt += 1
                if z[k] > zmax:
                    zmax = z[k]
        if cnt == 0:
            continue
        has[i] = True
        s = np.exp(z[i] - zmax)
        for k in range(n):
            if pred[k, i]:
                s += np.exp(z[k] - zmax)
        lse = zmax + np.log(s)
        nll[i] = lse - z[i]
        w = weights[i]
        if w != 0.0:
            dz[i] += w * (np.exp(z[i] - lse) - 1.0)
            for k in range(n):
                if pred[k, i]:
                    dz[k] += w * np.exp(z[k] - lse)
    return nll, has, dz


@njit
def boltzmann_action(q_row, temperature, u):
    """Sample from softmax(q_row / temperature) by inverse CDF on uniform ``u``."""
    na = q_row.shape[0]
    qmax = q_row[0]
    for a in range(1, na):
        if q_row[a] > qmax:
            qmax = q_row[a]
    total = 0.0
    probs = np.empty(na)
    for a in range(na):
        probs[a] = np.exp((q_row[a] - qmax) / temperature)
        total += probs[a]
    acc = 0.0
    for a in range(na):
        acc += probs[a] / total
        if u < acc:
            return a
    return na - 1


@njit
def greedy_action(q_row):
    best = 0
    for a in range(1, q_row.shape[0]):
        if q_row[a] > q_row[best]:
            best = a
    return best


@njit
def q_learning_episodes(q, reward_table, next_pos, start, horizon, n_episodes,
                        lr, gamma, temp_start, temp_end, uniforms, states_out, actions_out):
    """Tabular Q-learning with Boltzmann exploration on a deterministic grid.

    ``reward_table[t, s, a]`` is the (learned) reward for taking ``a`` in cell
    ``s`` at timestep ``t``; ``next_pos[s, a]`` the successor cell. The
    temperature anneals linearly from ``temp_start`` to ``temp_end`` over the
    ``n_episodes * horizon`` steps. ``q`` is updated in place; visited cells
    and actions are written to ``states_out`` (``n_episodes, horizon + 1``)
    and ``actions_out`` (``n_episodes, horizon``).
    """
    total = n_episodes * horizon
    step = 0
    for ep in range(n_episodes):
        s = start
        states_out[ep, 0] = s
        for t in range(horizon):
            if total > 1:
                frac = step / (total - 1)
            else:
                frac = 1.0
            temp = temp_start + (temp_end - temp_start) * frac
            a = boltzmann_action(q[s], temp, uniforms[step])
            s2 = next_pos[s, a]
            r = reward_table[t, s, a]
            best = q[s2, 0]
            for b in range(1, q.shape[1]):
                if q[s2, b] > best:
                    best = q[s2, b]
            q[s, a] += lr * (r + gamma * best - q[s, a])
            actions_out[ep, t] = a
            states_out[ep, t + 1] = s2
            s = s2
            step += 1


@njit
def random_episodes(next_pos, start, horizon, actions, states_out):
    """Roll out pre-drawn ``actions`` (``n_episodes, horizon``) from ``start``."""
    for ep in range(actions.shape[0]):
        s = start
        states_out[ep, 0] = s
        for t in range(horizon):
            s = next_pos[s, actions[ep, t]]
            states_out[ep, t + 1] = s


@njit
def greedy_episode(q, next_pos, start, horizon, states_out, actions_out):
    s = start
    states_out[0] = s
    for t in range(horizon):
        a = greedy_action(q[s])
        actions_out[t] = a
        s = next_pos[s, a]
        states_out[t + 1] = s
