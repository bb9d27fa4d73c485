"""Fixed-horizon grid environments.

``cliff_walking`` is the standard 4x12 layout: start bottom-left, goal
bottom-right, cliff in between. Falling off teleports back to the start; the
goal is absorbing but the episode only ends at the horizon.
``grid_world`` is a 5x5 sparse-goal world with no hazards.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Trajectory, Transition
from .errors import EpisodeOverError, UnsupportedEnvironmentError

UP, RIGHT, DOWN, LEFT = range(4)
MOVES = np.array([(-1, 0), (0, 1), (1, 0), (0, -1)])

CLIFF_PENALTY = -100.0
STEP_COST = -1.0
GOAL_BONUS = 5.0


@dataclass(frozen=True)
class EnvSpec:
    name: str = "cliff_walking"
    horizon: int = 48

    def __post_init__(self):
        if self.name not in ("cliff_walking", "grid_world"):
            raise UnsupportedEnvironmentError(f"unknown environment {self.name!r}")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")

    @property
    def shape(self) -> tuple[int, int]:
        return (4, 12) if self.name == "cliff_walking" else (5, 5)

    @property
    def n_states(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def state_dim(self) -> int:
        return self.n_states + 1

    @property
    def action_count(self) -> int:
        return 4

    @property
    def start(self) -> int:
        rows, cols = self.shape
        return (rows - 1) * cols if self.name == "cliff_walking" else 0

    @property
    def goal(self) -> int:
        return self.n_states - 1

    def cell(self, pos: int) -> tuple[int, int]:
        return divmod(int(pos), self.shape[1])

    def pos(self, row: int, col: int) -> int:
        return row * self.shape[1] + col

    @cached_property
    def cliff(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        if self.name == "cliff_walking":
            rows, cols = self.shape
            mask[(rows - 1) * cols + 1 : rows * cols - 1] = True
        return mask

    @cached_property
    def tables(self) -> tuple[np.ndarray, np.ndarray]:
        """``(next_pos, falls)`` indexed by ``[pos, action]``."""
        rows, cols = self.shape
        nxt = np.zeros((self.n_states, 4), dtype=np.int64)
        falls = np.zeros((self.n_states, 4), dtype=bool)
        for s in range(self.n_states):
            r, c = self.cell(s)
            for a in range(4):
                if s == self.goal:
                    nxt[s, a] = s
                    continue
                rr = min(max(r + MOVES[a, 0], 0), rows - 1)
                cc = min(max(c + MOVES[a, 1], 0), cols - 1)
                target = self.pos(rr, cc)
                if self.cliff[target]:
                    falls[s, a] = True
                    target = self.start
                nxt[s, a] = target
        nxt.setflags(write=False)
        falls.setflags(write=False)
        return nxt, falls

    def features(self, positions, timesteps) -> np.ndarray:
        """One-hot cell plus ``t / horizon``."""
        positions = np.asarray(positions, dtype=np.int64)
        timesteps = np.asarray(timesteps, dtype=np.float64)
        out = np.zeros((positions.shape[0], self.state_dim))
        out[np.arange(positions.shape[0]), positions] = 1.0
        out[:, -1] = timesteps / self.horizon
        return out

    def make_trajectory(self, uid: int, states, actions, source: str = "agent") -> Trajectory:
        states = np.asarray(states, dtype=np.int64)
        return Trajectory(uid, states, actions, self.features(states, np.arange(states.shape[0])), source)


@dataclass(frozen=True)
class EnvState:
    position: int
    timestep: int = 0


def reset(spec: EnvSpec, rng: np.random.Generator | None = None) -> EnvState:
    return EnvState(spec.start, 0)


def step(spec: EnvSpec, state: EnvState, action: int) -> tuple[EnvState, Transition]:
    if state.timestep >= spec.horizon:
        raise EpisodeOverError(f"episode already reached horizon {spec.horizon}")
    if not 0 <= action < spec.action_count:
        raise ValueError(f"action {action} out of range")
    nxt, _ = spec.tables
    s2 = int(nxt[state.position, action])
    f = spec.features([state.position, s2], [state.timestep, state.timestep + 1])
    return EnvState(s2, state.timestep + 1), Transition(f[0], int(action), f[1], state.position, s2)


def _cell_of(spec: EnvSpec, t: Transition) -> tuple[int, int]:
    if t.state_id >= 0:
        return t.state_id, t.next_state_id
    return int(np.argmax(t.state[: spec.n_states])), int(np.argmax(t.next_state[: spec.n_states]))


def ground_truth_reward_table(spec: EnvSpec) -> np.ndarray:
    """Ground-truth reward indexed by ``[pos, action]``."""
    nxt, falls = spec.tables
    if spec.name == "cliff_walking":
        r = np.where(nxt == spec.goal, GOAL_BONUS, STEP_COST)
        return np.where(falls, CLIFF_PENALTY, r)
    return np.where(nxt == spec.goal, 1.0, 0.0)


def shaped_reward_table(spec: EnvSpec) -> np.ndarray:
    """Cliff penalty kept; otherwise -1 to 5 interpolated by L1 progress of the landing cell."""
    if spec.name != "cliff_walking":
        raise UnsupportedEnvironmentError("shaped reward is only defined for cliff_walking")
    nxt, falls = spec.tables
    sr, sc = spec.cell(spec.start)
    gr, gc = spec.cell(spec.goal)
    rows, cols = np.divmod(nxt, spec.shape[1])
    d_start = np.abs(rows - sr) + np.abs(cols - sc)
    d_goal = np.abs(rows - gr) + np.abs(cols - gc)
    w = 1.0 - d_goal / (d_start + d_goal)
    r = (1.0 - w) * STEP_COST + w * GOAL_BONUS
    return np.where(falls, CLIFF_PENALTY, r)


def ground_truth_reward(spec: EnvSpec, t: Transition) -> float:
    s, _ = _cell_of(spec, t)
    return float(ground_truth_reward_table(spec)[s, t.action])


def shaped_reward(spec: EnvSpec, t: Transition) -> float:
    s, _ = _cell_of(spec, t)
    return float(shaped_reward_table(spec)[s, t.action])


def trajectory_return(table: np.ndarray, traj: Trajectory, start: int = 0, length: int | None = None) -> float:
    """Sum of ``table[pos, action]`` over a transition range."""
    stop = traj.length if length is None else start + length
    return float(table[traj.states[start:stop], traj.actions[start:stop]].sum())


def optimal_return(spec: EnvSpec, table: np.ndarray | None = None) -> float:
    """Finite-horizon optimum by backward induction over ``(t, pos)``."""
    table = ground_truth_reward_table(spec) if table is None else table
    nxt, _ = spec.tables
    v = np.zeros(spec.n_states)
    for _ in range(spec.horizon):
        v = np.max(table + v[nxt], axis=1)
    return float(v[spec.start])
