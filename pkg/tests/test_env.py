from functools import lru_cache

import numpy as np
import pytest

from leopard.env import (
    DOWN, LEFT, RIGHT, UP,
    EnvSpec,
    ground_truth_reward,
    ground_truth_reward_table,
    optimal_return,
    reset,
    shaped_reward,
    shaped_reward_table,
    step,
    trajectory_return,
)
from leopard.errors import EpisodeOverError, UnsupportedEnvironmentError

CLIFF = EnvSpec("cliff_walking", 48)
GRID = EnvSpec("grid_world", 10)


def walk(spec, actions):
    s = reset(spec)
    out = []
    for a in actions:
        s, t = step(spec, s, a)
        out.append(t)
    return s, out


class TestLayout:
    def test_cliff_start_and_goal(self):
        assert CLIFF.cell(reset(CLIFF).position) == (3, 0)
        assert CLIFF.cell(CLIFF.goal) == (3, 11)
        assert CLIFF.cliff.sum() == 10

    def test_grid_world_start(self):
        assert reset(GRID).position == 0 and reset(GRID).timestep == 0

    def test_bad_specs(self):
        with pytest.raises(ValueError):
            EnvSpec("cliff_walking", 1)
        with pytest.raises(UnsupportedEnvironmentError):
            EnvSpec("half_cheetah", 10)


class TestStep:
    def test_cliff_teleports_to_start(self):
        s, (t,) = walk(CLIFF, [RIGHT])
        assert s.position == CLIFF.start and s.timestep == 1
        assert ground_truth_reward(CLIFF, t) == -100

    def test_wall_clamp(self):
        s, _ = walk(CLIFF, [LEFT, DOWN])
        assert s.position == CLIFF.start

    def test_timestep_increments_and_horizon(self):
        spec = EnvSpec("cliff_walking", 3)
        s, _ = walk(spec, [UP, UP, UP])
        assert s.timestep == 3 and CLIFF.cell(s.position) == (0, 0)
        with pytest.raises(EpisodeOverError):
            step(spec, s, UP)

    def test_bad_action(self):
        with pytest.raises(ValueError):
            step(CLIFF, reset(CLIFF), 4)

    def test_goal_absorbing_in_place(self):
        path = [UP] + [RIGHT] * 11 + [DOWN, DOWN, RIGHT]
        s, ts = walk(CLIFF, path)
        assert s.position == CLIFF.goal
        assert [ground_truth_reward(CLIFF, t) for t in ts] == [-1] * 12 + [5, 5, 5]


class TestRewards:
    def test_ordinary_move(self):
        _, (t,) = walk(CLIFF, [UP])
        assert ground_truth_reward(CLIFF, t) == -1

    def test_grid_world(self):
        table = ground_truth_reward_table(GRID)
        assert set(np.unique(table)) == {0.0, 1.0}
        assert table[GRID.goal - 1, RIGHT] == 1.0

    def test_pure_function(self):
        _, (t,) = walk(CLIFF, [UP])
        assert ground_truth_reward(CLIFF, t) == ground_truth_reward(CLIFF, t)

    def test_shaped_endpoints(self):
        table = shaped_reward_table(CLIFF)
        assert table[CLIFF.goal, DOWN] == pytest.approx(5.0)  # wall: stays at goal
        assert table[CLIFF.start, LEFT] == pytest.approx(-1.0)  # wall: stays at start

    def test_shaped_hand_value(self):
        # lands on (2, 5): d_start = 6, d_goal = 7, w = 6/13
        table = shaped_reward_table(CLIFF)
        assert table[CLIFF.pos(2, 4), RIGHT] == pytest.approx(-1 + 6 * 6 / 13)

    def test_shaped_midpoint(self):
        # no cell is equidistant on a 12-wide grid; (1, 5) and (1, 6) mirror each other
        table = shaped_reward_table(CLIFF)
        lo = table[CLIFF.pos(1, 4), RIGHT]
        hi = table[CLIFF.pos(1, 7), LEFT]
        assert (lo + hi) / 2 == pytest.approx(2.0)

    def test_shaped_cliff_penalty(self):
        _, (t,) = walk(CLIFF, [RIGHT])
        assert shaped_reward(CLIFF, t) == -100

    def test_shaped_grid_world_unsupported(self):
        with pytest.raises(UnsupportedEnvironmentError):
            shaped_reward_table(GRID)


def dp_oracle(spec):
    """Backward induction that only uses ``step`` and ``ground_truth_reward``."""

    @lru_cache(maxsize=None)
    def value(pos, t):
        if t == spec.horizon:
            return 0.0
        best = -np.inf
        for a in range(spec.action_count):
            s2, tr = step(spec, type(reset(spec))(pos, t), a)
            best = max(best, ground_truth_reward(spec, tr) + value(s2.position, t + 1))
        return best

    return value(spec.start, 0)


class TestOptimum:
    def test_cliff_optimum(self):
        # 13 steps along the safe edge then 35 timesteps at the goal
        assert optimal_return(CLIFF) == pytest.approx(-12 + 5 * 36) == dp_oracle(CLIFF)

    @pytest.mark.parametrize("spec", [EnvSpec("cliff_walking", 20), GRID])
    def test_matches_oracle(self, spec):
        assert optimal_return(spec) == pytest.approx(dp_oracle(spec))

    def test_episode_length(self):
        path = [UP] * 48
        _, ts = walk(CLIFF, path)
        assert len(ts) == CLIFF.horizon

    def test_trajectory_return(self):
        t = CLIFF.make_trajectory(0, [CLIFF.start, CLIFF.start], [RIGHT])
        assert trajectory_return(ground_truth_reward_table(CLIFF), t) == -100
