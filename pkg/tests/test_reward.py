import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leopard.core import Transition, make_fragment
from leopard.errors import NumericError, ShapeError
from leopard.reward import (
    RewardModel,
    check_finite,
    fragment_rewards,
    gather,
    gradient,
    reward_of_fragment,
    reward_of_transition,
)
from leopard.verify import finite_difference_error

from conftest import SMALL, make_traj, tabular


def mlp(seed=0, hidden=(32, 32)):
    return RewardModel.mlp(SMALL.state_dim, SMALL.action_count, hidden, np.random.default_rng(seed))


class TestRewardOfTransition:
    def test_zero_tabular(self):
        t = make_traj(0, 6)
        assert reward_of_transition(tabular(), t.transition(2)) == 0.0

    def test_mlp_zero_last_layer_gives_bias(self):
        m = mlp()
        p = m.params.copy()
        p[-33:-1] = 0.0  # final weight column
        p[-1] = 0.75
        assert reward_of_transition(m.with_params(p), make_traj(0, 6).transition(0)) == 0.75

    def test_table_lookup(self):
        table = np.zeros((SMALL.n_states, 4))
        table[3, 1] = 2.5
        feats = SMALL.features([3, 4], [0, 1])
        t = Transition(feats[0], 1, feats[1], 3, 4)
        assert reward_of_transition(tabular(params=table), t) == 2.5

    def test_dimension_mismatch(self):
        t = Transition(np.zeros(5), 0, np.zeros(5))
        with pytest.raises(ShapeError):
            reward_of_transition(mlp(), t)

    def test_action_out_of_range(self):
        f = SMALL.features([0, 1], [0, 1])
        with pytest.raises(ShapeError):
            reward_of_transition(tabular(), Transition(f[0], 7, f[1], 0, 1))


class TestReward:
    def test_sum_of_ones(self):
        f = make_fragment(make_traj(0, 6), 1, 3)
        m = tabular(params=np.ones(SMALL.n_states * 4))
        assert reward_of_fragment(m, f) == 3.0

    def test_zero_model(self):
        assert reward_of_fragment(tabular(), make_traj(0, 6).whole()) == 0.0

    def test_hand_sum(self):
        t = make_traj(0, 6)
        table = np.zeros((SMALL.n_states, 4))
        s0, a0, s1, a1 = t.states[0], t.actions[0], t.states[1], t.actions[1]
        if (s0, a0) == (s1, a1):
            pytest.skip("repeated transition")
        table[s0, a0], table[s1, a1] = 0.5, -0.2
        assert reward_of_fragment(tabular(params=table), make_fragment(t, 0, 2)) == pytest.approx(0.3, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 1000), st.integers(3, 12), st.data())
    def test_additive_over_concatenation(self, seed, length, data):
        t = make_traj(seed, length)
        m = mlp(seed)
        cut = data.draw(st.integers(1, length - 1))
        whole = reward_of_fragment(m, t.whole())
        parts = reward_of_fragment(m, make_fragment(t, 0, cut)) + reward_of_fragment(m, make_fragment(t, cut, length - cut))
        assert whole == pytest.approx(parts, rel=1e-12, abs=1e-12)

    def test_deterministic(self):
        fs = [make_traj(u, 8).whole() for u in range(4)]
        m = mlp(3)
        assert np.array_equal(fragment_rewards(m, fs), fragment_rewards(m.copy(), fs))


class TestGradient:
    def test_tabular_one_hot(self):
        t = make_traj(0, 6)
        g = gradient(tabular(), [(make_fragment(t, 2, 1), 1.0)])
        want = np.zeros((SMALL.n_states, 4))
        want[t.states[2], t.actions[2]] = 1.0
        assert np.array_equal(g, want.ravel())

    def test_zero_coefficients(self):
        fs = [make_traj(u, 6).whole() for u in range(3)]
        assert not np.any(gradient(mlp(), [(f, 0.0) for f in fs]))

    def test_empty_terms(self):
        assert gradient(tabular(), []).shape == (SMALL.n_states * 4,)

    def test_mlp_matches_finite_differences_tightly(self):
        rng = np.random.default_rng(1)
        m = mlp(1, (8, 8))
        f = make_traj(5, 8).whole()
        g = gradient(m, [(f, 1.0)])
        loss = lambda p: reward_of_fragment(m.with_params(p), f)
        assert finite_difference_error(loss, m.params, g, range(m.n_params)) < 1e-6

    def test_random_draws(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for k in range(100):
            m = mlp(k, (6, 5))
            terms = [(make_fragment(make_traj(k * 10 + j, 8), int(rng.integers(0, 4)), 4), float(rng.normal()))
                     for j in range(3)]
            g = gradient(m, terms)
            loss = lambda p: sum(c * reward_of_fragment(m.with_params(p), f) for f, c in terms)
            coords = rng.choice(m.n_params, 20, replace=False)
            worst = max(worst, finite_difference_error(loss, m.params, g, coords))
        assert worst < 1e-4

    def test_non_finite_names_index(self):
        g = np.zeros(5)
        g[3] = np.nan
        with pytest.raises(NumericError, match="index 3"):
            check_finite(g)


class TestModel:
    def test_param_count(self):
        m = mlp()
        assert m.n_params == RewardModel.n_params_for("mlp", m.arch) == (2 * 49 + 4) * 32 + 32 + 32 * 32 + 32 + 33
        with pytest.raises(ShapeError):
            RewardModel("mlp", m.params[:-1], m.arch)

    def test_non_finite_params_rejected(self):
        p = np.zeros(SMALL.n_states * 4)
        p[0] = np.inf
        with pytest.raises(NumericError):
            tabular(params=p)

    def test_init_bounds(self):
        m = mlp(4)
        (W0, b0), _, _ = m._layers()
        assert np.abs(W0).max() <= 1 / np.sqrt(102) and np.abs(b0).max() <= 1 / np.sqrt(102)

    def test_checkpoint_round_trip(self, tmp_path):
        m = mlp(7)
        m.save(tmp_path / "m.json")
        back = RewardModel.load(tmp_path / "m.json")
        assert back.kind == "mlp" and np.array_equal(back.params, m.params)
        f = [make_traj(0, 6).whole()]
        assert np.array_equal(fragment_rewards(back, f), fragment_rewards(m, f))

    def test_gather_layout(self):
        fs = [make_fragment(make_traj(0, 8), 2, 3), make_traj(1, 8).whole()]
        b = gather(fs)
        assert b.offsets.tolist() == [0, 3] and b.lengths.tolist() == [3, 8]
        assert b.segment.tolist() == [0] * 3 + [1] * 8
