import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit
from scipy.stats import binom

from leopard.agent import random_rollouts
from leopard.core import make_fragment
from leopard.env import EnvSpec, ground_truth_reward_table, shaped_reward_table, trajectory_return
from leopard.errors import DegenerateFeedbackError, NoDataError
from leopard.oracle import (
    generate_demonstrations,
    get_preferences,
    preference_reward_fn,
    ranking_by_return,
    sample_preference,
    table_reward_fn,
)

from conftest import make_traj

CLIFF = EnvSpec("cliff_walking", 48)


@pytest.fixture(scope="module")
def pools():
    trajs = random_rollouts(CLIFF, 20 * 48, np.random.default_rng(0))
    return trajs[:10], trajs[10:]


@pytest.fixture(scope="module")
def positive_demos():
    return generate_demonstrations(CLIFF, 2, "positive", np.random.default_rng(0))


class TestSamplePreference:
    @pytest.mark.parametrize("gap", [0.0, 1.0, -1.0, 2.0, -2.0])
    def test_calibration(self, gap):
        a, b = make_traj(0, 4).whole(), make_traj(1, 4).whole()
        fn = lambda f: gap if f is a else 0.0
        rng = np.random.default_rng(int(10 * gap) + 100)
        n = 10_000
        hits = sum(sample_preference(a, b, fn, rng)[0] is a for _ in range(n))
        lo, hi = binom.interval(0.99, n, expit(gap))
        assert lo <= hits <= hi

    def test_huge_gap_deterministic(self):
        a, b = make_traj(0, 4).whole(), make_traj(1, 4).whole()
        fn = lambda f: 1e3 if f is a else 0.0
        rng = np.random.default_rng(0)
        assert all(sample_preference(a, b, fn, rng) == (a, b) for _ in range(200))
        assert all(sample_preference(b, a, fn, rng) == (a, b) for _ in range(200))

    def test_same_fragment(self):
        a = make_traj(0, 4).whole()
        with pytest.raises(DegenerateFeedbackError):
            sample_preference(a, a, lambda f: 0.0, np.random.default_rng(0))

    def test_cliff_uses_shaped_reward(self, pools):
        f = pools[0][0].whole()
        assert preference_reward_fn(CLIFF)(f) == trajectory_return(shaped_reward_table(CLIFF), f.traj)


class TestGetPreferences:
    def test_zero(self, pools):
        assert get_preferences(0, *pools, 16, preference_reward_fn(CLIFF), np.random.default_rng(0)) == []

    def test_empty_new(self, pools):
        with pytest.raises(NoDataError):
            get_preferences(3, [], pools[1], 16, preference_reward_fn(CLIFF), np.random.default_rng(0))

    def test_fragment_too_long(self, pools):
        with pytest.raises(NoDataError):
            get_preferences(3, pools[0], [], 49, preference_reward_fn(CLIFF), np.random.default_rng(0))

    def test_lengths_and_sources(self, pools):
        new, old = pools
        prefs = get_preferences(200, new, old, 16, preference_reward_fn(CLIFF), np.random.default_rng(1))
        new_ids = {t.uid for t in new}
        assert len(prefs) == 200
        assert all(a.length == b.length == 16 and a != b for a, b in prefs)
        # one member of every pair comes from the new trajectories
        assert all(a.traj.uid in new_ids or b.traj.uid in new_ids for a, b in prefs)
        assert any(a.traj.uid not in new_ids or b.traj.uid not in new_ids for a, b in prefs)

    def test_empty_pool_uses_new_only(self, pools):
        new, _ = pools
        prefs = get_preferences(50, new, [], 16, preference_reward_fn(CLIFF), np.random.default_rng(2))
        ids = {t.uid for t in new}
        assert all(a.traj.uid in ids and b.traj.uid in ids for a, b in prefs)

    def test_reproducible(self, pools):
        run = lambda: get_preferences(30, *pools, 16, preference_reward_fn(CLIFF), np.random.default_rng(5))
        assert run() == run()


class TestDemonstrations:
    def test_positive_reach_goal(self, positive_demos):
        demos, ranking = positive_demos
        assert len(demos) == 2 and all(t.source == "demo_positive" for t in demos)
        assert all(CLIFF.goal in t.states for t in demos)
        gt = ground_truth_reward_table(CLIFF)
        returns = [trajectory_return(gt, t) for t in demos]
        best = demos[int(np.argmax(returns))].whole()
        assert all((other, best) in ranking.less_than for other in ranking.items if other != best)

    def test_negative_below_random(self):
        demos, _ = generate_demonstrations(CLIFF, 2, "negative", np.random.default_rng(0))
        gt = ground_truth_reward_table(CLIFF)
        baseline = np.mean([trajectory_return(gt, t) for t in random_rollouts(CLIFF, 500 * 48, np.random.default_rng(9))])
        assert all(trajectory_return(gt, t) < baseline for t in demos)
        assert all(t.source == "demo_negative" for t in demos)

    def test_ranking_total_order_without_inversions(self):
        demos, ranking = generate_demonstrations(CLIFF, 4, "positive", np.random.default_rng(1), train_episodes=100)
        gt = ground_truth_reward_table(CLIFF)
        assert set(ranking.items) == {t.whole() for t in demos}
        assert len(ranking.less_than) == 4 * 3 // 2
        ret = {t.whole(): trajectory_return(gt, t) for t in demos}
        assert all(ret[a] <= ret[b] for a, b in ranking.less_than)

    def test_reproducible(self):
        run = lambda: generate_demonstrations(CLIFF, 3, "positive", np.random.default_rng(4), train_episodes=50)
        (d1, r1), (d2, r2) = run(), run()
        assert all(np.array_equal(a.states, b.states) for a, b in zip(d1, d2))
        assert r1.to_json() == r2.to_json()

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_demonstrations(CLIFF, 0, "positive", np.random.default_rng(0))
        with pytest.raises(ValueError):
            generate_demonstrations(CLIFF, 1, "neutral", np.random.default_rng(0))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_ranking_by_return_property(n, seed):
    spec = EnvSpec("cliff_walking", 4)
    trajs = [make_traj(i, 4, spec, seed=seed + i) for i in range(n)]
    table = np.random.default_rng(seed).normal(size=(spec.n_states, 4))
    ranking = ranking_by_return(trajs, table)
    ret = {t.whole(): trajectory_return(table, t) for t in trajs}
    assert all(ret[a] <= ret[b] for a, b in ranking.less_than)
    assert len(ranking.less_than) == len(trajs) * (len(trajs) - 1) // 2


def test_table_reward_fn_matches_fragment_slice():
    t = make_traj(0, 10)
    table = np.random.default_rng(0).normal(size=(48, 4))
    f = make_fragment(t, 3, 4)
    assert table_reward_fn(table)(f) == pytest.approx(table[t.states[3:7], t.actions[3:7]].sum())
