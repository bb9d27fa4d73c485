import itertools

import numpy as np
import pytest

from leopard.agent import random_rollouts
from leopard.env import EnvSpec
from leopard.reward import RewardModel

SMALL = EnvSpec("cliff_walking", horizon=8)


def make_traj(uid=0, length=10, spec=SMALL, seed=None, source="agent"):
    rng = np.random.default_rng(uid if seed is None else seed)
    (t,) = random_rollouts(EnvSpec(spec.name, length), length, rng, iter([uid]))
    return t.with_source(source)


def tabular(spec=SMALL, params=None):
    return RewardModel.tabular(spec.n_states, spec.action_count, params)


def unit_fragments(cells):
    """Length-1 fragments taking action ``a`` from cell ``s`` for each ``(s, a)``."""
    nxt, _ = SMALL.tables
    out = []
    for uid, (s, a) in enumerate(cells):
        t = SMALL.make_trajectory(uid, [s, nxt[s, a]], [a])
        out.append(t.whole())
    return out


def model_with(cells, values):
    table = np.zeros((SMALL.n_states, 4))
    for (s, a), v in zip(cells, values):
        table[s, a] = v
    return tabular(params=table)


# distinct (cell, action) pairs, one per unit fragment
CELLS = [(0, 1), (12, 1), (24, 1), (0, 2), (13, 1), (25, 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ids():
    return itertools.count()


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
