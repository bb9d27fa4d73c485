"""Property checks over random instances, bundled into one JSON-able report.

Each check returns a dict with ``name``, ``passed``, ``n_instances`` and a
``margin`` (how far the worst instance sits from failing; negative means a
failure) alongside the quantity that defines it.
"""

from __future__ import annotations

import itertools
import math
import time
from typing import Callable

import numpy as np
from scipy.stats import binom

from .agent import random_rollouts
from .baselines import counterexample_theorem2, counterexample_theorem3, verify_soc_gradient_identity
from .core import Fragment, TrajectoryPool, make_fragment
from .env import EnvSpec
from .oracle import sample_preference
from .ordering import FeedbackDatasets, PartialOrdering, from_ranking, ordering_from_pairs
from .reward import RewardModel, fragment_rewards
from .rrpo import RrpoBatch, combined_loss, dataset_factors, encode, fit_orderings, rrpo_nll

SMALL_SPEC = EnvSpec("cliff_walking", horizon=8)
_uids = itertools.count(10**9)


# --- random instances ---------------------------------------------------------


def random_fragments(
    rng: np.random.Generator, n: int, length: int = 4, spec: EnvSpec = SMALL_SPEC, ids=None
) -> list[Fragment]:
    """``n`` fragments cut from fresh random rollouts (unique ids across calls)."""
    trajs = random_rollouts(spec, n * spec.horizon, rng, _uids if ids is None else ids)
    return [make_fragment(t, int(rng.integers(spec.horizon - length + 1)), length) for t in trajs]


def random_tabular(rng: np.random.Generator, spec: EnvSpec = SMALL_SPEC, scale: float = 1.0) -> RewardModel:
    return RewardModel.tabular(spec.n_states, spec.action_count, scale * rng.standard_normal(spec.n_states * spec.action_count))


def random_closed_ordering(
    rng: np.random.Generator, items: list[Fragment], beta: float = 1.0, density: float | None = None, min_edges: int = 1
) -> PartialOrdering:
    """Random DAG over ``items`` (edges follow a hidden permutation), transitively closed."""
    n = len(items)
    while True:
        p = rng.uniform(0.2, 0.8) if density is None else density
        perm = rng.permutation(n)
        pairs = [(items[perm[i]], items[perm[j]]) for i, j in itertools.combinations(range(n), 2) if rng.random() < p]
        o = ordering_from_pairs(items, pairs, beta)
        if len(o.less_than) >= min_edges:
            return o


def random_feedback(rng: np.random.Generator, spec: EnvSpec = SMALL_SPEC, fragment_len: int = 3) -> FeedbackDatasets:
    """A small dataset with every source present."""
    ids = itertools.count()
    pick = lambda lo, hi: int(rng.integers(lo, hi + 1))
    pos = [t.with_source("demo_positive") for t in random_rollouts(spec, pick(1, 3) * spec.horizon, rng, ids)]
    neg = [t.with_source("demo_negative") for t in random_rollouts(spec, pick(1, 3) * spec.horizon, rng, ids)]
    agent = random_rollouts(spec, pick(1, 4) * spec.horizon, rng, ids)
    prefs = []
    for _ in range(pick(1, 4)):
        a, b = rng.choice(len(agent), 2) if len(agent) > 1 else (0, 0)
        fa = make_fragment(agent[a], pick(0, spec.horizon - fragment_len), fragment_len)
        fb = make_fragment(agent[b], pick(0, spec.horizon - fragment_len), fragment_len)
        if fa != fb:
            prefs.append((fa, fb))
    rank = lambda ts: from_ranking([t.whole() for t in ts]) if len(ts) > 1 else None
    return FeedbackDatasets(TrajectoryPool(pos), TrajectoryPool(neg), TrajectoryPool(agent), prefs, rank(pos), rank(neg))


def _pair_gaps(o: PartialOrdering, R: np.ndarray) -> np.ndarray:
    """``R_b - R_a`` for every ``a < b`` in ``o``."""
    return np.array([R[o.index[b]] - R[o.index[a]] for a, b in o.less_than])


# --- checks -------------------------------------------------------------------


def check_nll_bound(rng: np.random.Generator, n_instances: int = 200, bound_offset: float = 0.0) -> dict:
    """Every ordered pair clears ``-(1/beta) log(e^L - 1)``; ``bound_offset`` corrupts the bound."""
    worst = math.inf
    violations = 0
    for _ in range(n_instances):
        beta = float(rng.choice([0.5, 1.0, 2.0]))
        items = random_fragments(rng, int(rng.integers(3, 9)))
        o = random_closed_ordering(rng, items, beta, min_edges=2)
        m = random_tabular(rng, scale=float(rng.uniform(0.1, 2.0)))
        L = rrpo_nll(RrpoBatch([o]), m)
        bound = -math.log(math.expm1(L)) / beta + bound_offset
        gaps = _pair_gaps(o, fragment_rewards(m, list(o.items)))
        margin = float(gaps.min() - bound)
        violations += int(np.sum(gaps <= bound))
        worst = min(worst, margin)
    return {"name": "nll_pair_bound", "passed": violations == 0, "n_instances": n_instances,
            "violations": violations, "margin": worst}


def check_log2_corollary(rng: np.random.Generator, n_instances: int = 20) -> dict:
    """Fit a tabular model below log 2 on satisfiable orderings; every pair must then be strictly ordered."""
    worst = math.inf
    violations = unfitted = 0
    for _ in range(n_instances):
        hidden = random_tabular(rng)
        orderings = []
        for _ in range(int(rng.integers(1, 4))):
            items = random_fragments(rng, int(rng.integers(2, 7)))
            R = fragment_rewards(hidden, items)
            pairs = [(a, b) for (a, ra), (b, rb) in itertools.permutations(zip(items, R), 2) if rb - ra > 0.25]
            if pairs:
                orderings.append(ordering_from_pairs(items, pairs))
        if not orderings:
            continue
        m, nll, _ = fit_orderings(RewardModel.tabular(SMALL_SPEC.n_states, SMALL_SPEC.action_count), orderings)
        if not nll < math.log(2):
            unfitted += 1
            continue
        for o in orderings:
            gaps = _pair_gaps(o, fragment_rewards(m, list(o.items)))
            violations += int(np.sum(gaps <= 0))
            worst = min(worst, float(gaps.min()))
    return {"name": "log2_corollary", "passed": violations == 0 and unfitted == 0, "n_instances": n_instances,
            "violations": violations, "unfitted": unfitted, "margin": worst}


def plackett_luce_nll(z: np.ndarray) -> float:
    """Sequential-choice NLL of ``z`` ordered best first, by direct enumeration of the remaining sets."""
    total = 0.0
    for k in range(len(z)):
        rest = z[k:]
        total -= z[k] - math.log(sum(math.exp(v) for v in rest))
    return total


def check_plackett_luce(rng: np.random.Generator, n_instances: int = 100) -> dict:
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(2, 7))
        beta = float(rng.choice([0.5, 1.0, 2.0]))
        items = random_fragments(rng, n)
        m = random_tabular(rng)
        ranked = [items[i] for i in rng.permutation(n)]
        got = rrpo_nll(RrpoBatch([from_ranking(ranked, beta)]), m)
        want = plackett_luce_nll(beta * fragment_rewards(m, ranked))
        worst = max(worst, abs(got - want))
    return {"name": "plackett_luce_equivalence", "passed": worst <= 1e-10, "n_instances": n_instances,
            "max_abs_error": worst, "margin": 1e-10 - worst}


def check_counterexamples(epsilons=(0.1, 0.5, 1.0), r2s=(10.0, 100.0, 1000.0)) -> dict:
    """Loss pinned at epsilon while the gap falls past the RRPO bound and keeps falling as r2 grows."""
    loss_err = 0.0
    ok = True
    for gen in (counterexample_theorem2, counterexample_theorem3):
        for eps in epsilons:
            rrpo_floor = -math.log(math.expm1(eps))
            gaps = []
            for r2 in r2s:
                _, loss, gap = gen(0.0, r2, eps)
                loss_err = max(loss_err, abs(loss - eps))
                gaps.append(gap)
            ok &= all(g < rrpo_floor for g in gaps) and all(b < a for a, b in zip(gaps, gaps[1:]))
    return {"name": "soc_cba_counterexamples", "passed": ok and loss_err <= 1e-9, "n_instances": 2 * len(epsilons),
            "max_loss_error": loss_err, "margin": 1e-9 - loss_err}


def check_soc_identity(rng: np.random.Generator, n_instances: int = 50) -> dict:
    worst = 0.0
    for _ in range(n_instances):
        pos = random_fragments(rng, int(rng.integers(1, 5)), SMALL_SPEC.horizon)
        agent = random_fragments(rng, int(rng.integers(1, 6)), SMALL_SPEC.horizon)
        worst = max(worst, verify_soc_gradient_identity(pos, agent, random_tabular(rng)))
    return {"name": "soc_gradient_identity", "passed": worst < 1e-10, "n_instances": n_instances,
            "max_abs_error": worst, "margin": 1e-10 - worst}


def finite_difference_error(
    loss_fn: Callable[[np.ndarray], float], params: np.ndarray, grad: np.ndarray, coords, h: float = 1e-5, floor: float = 1e-6
) -> float:
    """Worst per-coordinate relative error of ``grad`` against central differences."""
    worst = 0.0
    for i in coords:
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        fd = (loss_fn(up) - loss_fn(dn)) / (2 * h)
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), floor))
    return worst


def check_gradients(rng: np.random.Generator, n_instances: int = 100, n_coords: int = 24) -> dict:
    """combined_loss gradient vs central differences, alternating tabular and MLP models."""
    worst = 0.0
    for k in range(n_instances):
        d = random_feedback(rng)
        b = encode(d, split_mode=bool(k % 4 == 3))
        factors = dataset_factors(d)
        if k % 2:
            m = RewardModel.mlp(SMALL_SPEC.state_dim, SMALL_SPEC.action_count, (8, 8), rng)
        else:
            m = random_tabular(rng)
        _, g = combined_loss(b, m, factors, 0.1, True)
        f = lambda p: combined_loss(b, m.with_params(p), factors, 0.1)
        if m.n_params <= 2 * n_coords:
            coords = range(m.n_params)
        else:
            top = np.argsort(-np.abs(g))[: n_coords // 2]
            coords = np.unique(np.concatenate([top, rng.choice(m.n_params, n_coords // 2, replace=False)]))
        worst = max(worst, finite_difference_error(f, m.params, g, coords))
    return {"name": "combined_loss_gradient", "passed": worst < 1e-4, "n_instances": n_instances,
            "max_rel_error": worst, "margin": 1e-4 - worst}


def check_oracle_calibration(rng: np.random.Generator, n_samples: int = 10_000, deltas=(-2, -1, 0, 1, 2)) -> dict:
    """Empirical preference rate inside the 99% binomial interval of sigmoid(delta)."""
    a, b = random_fragments(rng, 2)
    rates, ok = {}, True
    worst = math.inf
    for delta in deltas:
        fn = lambda f, delta=delta: float(delta) if f == a else 0.0
        hits = sum(sample_preference(a, b, fn, rng)[0] == a for _ in range(n_samples))
        p = 1.0 / (1.0 + math.exp(-delta))
        lo, hi = binom.interval(0.99, n_samples, p)
        rates[str(delta)] = hits / n_samples
        ok &= lo <= hits <= hi
        worst = min(worst, (hits - lo) / n_samples, (hi - hits) / n_samples)
    return {"name": "oracle_calibration", "passed": bool(ok), "n_instances": len(deltas) * n_samples,
            "rates": rates, "margin": worst}


def verify_all(rng: np.random.Generator | None = None, bound_offset: float = 0.0, quick: bool = False) -> dict:
    """Run every check; ``bound_offset`` tightens the pair-gap bound to exercise the failure path."""
    rng = np.random.default_rng(0) if rng is None else rng
    scale = 5 if quick else 1
    runs = [
        lambda: check_nll_bound(rng, 200 // scale, bound_offset),
        lambda: check_log2_corollary(rng, 20 // scale),
        lambda: check_plackett_luce(rng, 100 // scale),
        check_counterexamples,
        lambda: check_soc_identity(rng, 50 // scale),
        lambda: check_gradients(rng, 100 // scale),
        lambda: check_oracle_calibration(rng, 10_000 // scale),
    ]
    checks = []
    for run in runs:
        t0 = time.perf_counter()
        res = run()
        res = {k: v.item() if isinstance(v, np.generic) else v for k, v in res.items()}
        res["seconds"] = round(time.perf_counter() - t0, 3)
        checks.append(res)
    return {"passed": all(c["passed"] for c in checks), "checks": checks}
