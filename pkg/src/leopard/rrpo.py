"""RRPO likelihood, normalised combined loss, and reward-model training."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .core import Fragment, TrajectoryPool, full_fragments
from .errors import DegenerateInputError, NoFeedbackError, NormalizationError, NumericError
from .optim import AdamW
from .ordering import (
    DEFAULT_BETA,
    FeedbackDatasets,
    PartialOrdering,
    demos_vs_agent,
    from_preference,
    predecessors,
)
from .reward import RewardModel, check_finite, fragment_rewards, gather

SOURCE_TAGS = ("pos", "neg", "agent", "pref")


@dataclass
class RrpoBatch:
    """Fragments ``D`` and orderings ``C`` with a source tag per fragment.

    ``ordering_tags[j]``, when not None, overrides the fragment tags for every
    item of ordering ``j`` (preference orderings are tagged ``"pref"`` even if
    their fragments also appear elsewhere). ``extra`` fragments take part in
    the smoothness term without being ordered.
    """

    orderings: list[PartialOrdering]
    tags: dict[Fragment, str] = field(default_factory=dict)
    ordering_tags: list[str | None] | None = None
    extra: list[Fragment] = field(default_factory=list)

    def __post_init__(self):
        if self.ordering_tags is None:
            self.ordering_tags = [None] * len(self.orderings)
        frags = []
        for o in self.orderings:
            frags.extend(o.items)
        frags.extend(self.extra)
        self.fragments: list[Fragment] = list(dict.fromkeys(frags))
        self.index = {f: i for i, f in enumerate(self.fragments)}

    def tag_of(self, j: int, f: Fragment) -> str:
        return self.ordering_tags[j] or self.tags.get(f, "agent")

    def pool_fragments(self) -> list[Fragment]:
        """Batch fragments that are not preference fragments."""
        pref = set()
        for j, o in enumerate(self.orderings):
            if self.ordering_tags[j] == "pref":
                pref.update(o.items)
        return [f for f in self.fragments if f not in pref or f in self.tags]


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    smooth_weight: float = 0.1
    batch_size: int = 16
    split_mode: bool = False
    beta: float = DEFAULT_BETA
    consecutive_needed: int = 3
    rel_tol: float = 0.10
    epoch_cap: int = 256


@dataclass
class TrainReport:
    steps_taken: int
    final_loss: float
    final_loss_unsmoothed: float
    stop_reason: str
    records: list[dict] = field(default_factory=list)


# --- likelihood -----------------------------------------------------------


def choice_log_prob(o: PartialOrdering, item: Fragment, m: RewardModel) -> float:
    """Log-probability that ``item`` is chosen over its predecessors in ``o``."""
    preds = sorted(predecessors(o, item), key=lambda f: f.key)
    if not preds:
        return 0.0
    z = o.beta * fragment_rewards(m, [item, *preds])
    zmax = z.max()
    return float(z[0] - (zmax + math.log(np.exp(z - zmax).sum())))


def _ordering_eval(o: PartialOrdering, R: np.ndarray, idx: np.ndarray, weights: np.ndarray):
    z = o.beta * R[idx]
    nll, has, dz = _kernels.choice_terms(z, np.ascontiguousarray(o.less_matrix), weights)
    return nll, has, o.beta * dz


def _source_terms(b: RrpoBatch, R: np.ndarray, scale: Mapping[str, float] | None):
    """Per-source NLL sums, and (when ``scale`` is given) d(sum_s scale_s * nll_s)/dR."""
    nll = {}
    dR = np.zeros_like(R)
    for j, o in enumerate(b.orderings):
        if not o.less_than:
            continue
        idx = np.array([b.index[f] for f in o.items], dtype=np.int64)
        tags = [b.tag_of(j, f) for f in o.items]
        w = np.array([scale.get(t, 0.0) for t in tags]) if scale is not None else np.zeros(len(tags))
        terms, has, dz = _ordering_eval(o, R, idx, w)
        for t, v, h in zip(tags, terms, has):
            if h:
                nll[t] = nll.get(t, 0.0) + float(v)
        if scale is not None:
            np.add.at(dR, idx, dz)
    return nll, dR


def rrpo_nll(b: RrpoBatch, m: RewardModel) -> float:
    """Negative log of the RRPO likelihood; unity terms are skipped."""
    if not b.orderings or not b.fragments:
        return 0.0
    R = fragment_rewards(m, b.fragments)
    nll, _ = _source_terms(b, R, None)
    return float(sum(nll.values()))


def source_nll(b: RrpoBatch, m: RewardModel) -> dict[str, float]:
    if not b.fragments:
        return {}
    R = fragment_rewards(m, b.fragments)
    return _source_terms(b, R, None)[0]


# --- smoothness -----------------------------------------------------------


def _smoothness_from_rewards(r: np.ndarray, offsets, lengths):
    """Value and per-transition gradient of the mean-squared reward derivative."""
    grad = np.zeros_like(r)
    if not len(lengths):
        return 0.0, grad
    total = 0.0
    n_traj = len(lengths)
    for off, n in zip(offsets, lengths):
        seg = r[off : off + n]
        diff = seg[:-1] - seg[1:]
        total += float(np.mean(diff * diff))
        g = 2.0 * diff / (n - 1) / n_traj
        grad[off : off + n - 1] += g
        grad[off + 1 : off + n] -= g
    return total / n_traj, grad


def smoothness_loss(full_trajectories: Sequence[Fragment], m: RewardModel) -> float:
    if not full_trajectories:
        return 0.0
    short = [f.key for f in full_trajectories if f.length < 2]
    if short:
        raise DegenerateInputError(f"smoothness needs length >= 2, got fragment {short[0]}")
    batch = gather(full_trajectories)
    r = m.transition_rewards(batch)
    return _smoothness_from_rewards(r, batch.offsets, batch.lengths)[0]


# --- normalisation ----------------------------------------------------------


def normalising_factor(b: RrpoBatch) -> dict[str, float]:
    """Summed length of (item, ordering) pairs with at least one predecessor, per source."""
    out = {t: 0.0 for t in SOURCE_TAGS}
    for j, o in enumerate(b.orderings):
        if not o.less_than:
            continue
        has = o.less_matrix.any(axis=0)
        for f, h in zip(o.items, has):
            if h:
                t = b.tag_of(j, f)
                out[t] = out.get(t, 0.0) + f.length
    return out


def combined_loss(
    b: RrpoBatch,
    m: RewardModel,
    dataset_factors: Mapping[str, float] | None = None,
    smooth_weight: float = 0.1,
    return_grad: bool = False,
    details: dict | None = None,
):
    """Source-normalised NLL plus weighted smoothness.

    Each source's NLL is divided by its batch normalising factor, then the
    sources with terms in this batch are mixed with weights proportional to
    ``dataset_factors``. Returns the loss, or ``(loss, grad)``.
    """
    batch_f = normalising_factor(b)
    dataset_factors = batch_f if dataset_factors is None else dataset_factors
    present = [t for t, v in batch_f.items() if v > 0]
    for t in present:
        if dataset_factors.get(t, 0.0) <= 0:
            raise NormalizationError(f"source {t!r} has batch terms but zero dataset factor")
    denom = sum(dataset_factors[t] for t in present)
    scale = {t: dataset_factors[t] / denom / batch_f[t] for t in present}

    frags = b.fragments
    tb = gather(frags)
    r = m.transition_rewards(tb)
    R = np.add.reduceat(r, tb.offsets)
    nll, dR = _source_terms(b, R, scale)
    for t in nll:
        if t not in scale:
            raise NormalizationError(f"source {t!r} has terms but zero batch factor")
    data_loss = sum(scale[t] * v for t, v in nll.items())

    full = [f for f in full_fragments(b.pool_fragments()) if f.length >= 2]
    full_idx = np.array([b.index[f] for f in full], dtype=np.int64)
    sm, sm_grad = _smoothness_from_rewards(r, tb.offsets[full_idx], tb.lengths[full_idx])
    loss = data_loss + smooth_weight * sm
    if not math.isfinite(loss):
        raise NumericError("non-finite combined loss")
    if details is not None:
        details.update({"nll": nll, "smoothness": sm, "data_loss": data_loss, "batch_factors": batch_f})
    if not return_grad:
        return loss
    upstream = dR[tb.segment] + smooth_weight * sm_grad
    return loss, check_finite(m.backward(tb, upstream))


# --- stopping ---------------------------------------------------------------


def should_stop(
    loss_history: Sequence[float],
    consecutive_needed: int = 3,
    rel_tol: float = 0.10,
    epoch_cap: int = 256,
) -> tuple[bool, str | None]:
    if not len(loss_history):
        raise ValueError("empty loss history")
    if len(loss_history) >= epoch_cap:
        return True, "epoch_cap"
    run = 0
    for prev, cur in zip(loss_history[-consecutive_needed - 1 : -1], loss_history[-consecutive_needed:]):
        run = run + 1 if abs(cur - prev) < rel_tol * abs(prev) else 0
    if len(loss_history) > consecutive_needed and run >= consecutive_needed:
        return True, "converged"
    return False, None


# --- training -----------------------------------------------------------------


def _sample(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return np.sort(rng.choice(n, size=min(n, k), replace=False)) if n else np.zeros(0, dtype=np.int64)


def _subpool(pool: TrajectoryPool, picks) -> TrajectoryPool:
    trajs = pool.trajectories()
    return TrajectoryPool([trajs[i] for i in picks])


def encode(d: FeedbackDatasets, split_mode: bool = False, beta: float = DEFAULT_BETA, extra_agent: bool = True) -> RrpoBatch:
    """Encode feedback into orderings and fragments (demo ordering plus one ordering per preference)."""
    orderings, otags = [], []
    tags: dict[Fragment, str] = {}
    for pool, tag in ((d.d_pos, "pos"), (d.d_neg, "neg"), (d.d_agent, "agent")):
        for f in pool.fragments():
            tags[f] = tag
    if len(d.d_pos) or len(d.d_neg):
        for o in demos_vs_agent(d, split_mode, beta):
            orderings.append(o)
            otags.append(None)
    for preferred, other in d.prefs:
        orderings.append(from_preference(preferred, other, beta))
        otags.append("pref")
    extra = d.d_agent.fragments() if extra_agent else []
    return RrpoBatch(orderings, tags, otags, extra)


def dataset_factors(d: FeedbackDatasets, split_mode: bool = False, beta: float = DEFAULT_BETA) -> dict[str, float]:
    """Normalising factors on the whole dataset, with the agent pool treated as in-excess.

    The agent factor is pegged to the positive-demo factor, or to the total
    negative-demo length when there are no positive demos.
    """
    f = normalising_factor(encode(d, split_mode, beta, extra_agent=False))
    if f.get("agent", 0.0) > 0:
        if len(d.d_pos):
            f["agent"] = f["pos"]
        else:
            f["agent"] = float(sum(t.length for t in d.d_neg))
    return f


def sample_batch(d: FeedbackDatasets, rng: np.random.Generator, batch_size: int) -> FeedbackDatasets:
    pos = _sample(rng, len(d.d_pos), batch_size)
    neg = _sample(rng, len(d.d_neg), batch_size)
    agent = _sample(rng, len(d.d_agent), batch_size)
    prefs = _sample(rng, len(d.prefs), batch_size)
    bp, bn = _subpool(d.d_pos, pos), _subpool(d.d_neg, neg)
    return FeedbackDatasets(
        bp, bn, _subpool(d.d_agent, agent), [d.prefs[i] for i in prefs],
        d.rank_pos.restrict(bp.fragments()) if d.rank_pos is not None else None,
        d.rank_neg.restrict(bn.fragments()) if d.rank_neg is not None else None,
    )


def train_reward_model(
    m: RewardModel,
    d: FeedbackDatasets,
    opt_config: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[RewardModel, TrainReport]:
    """AdamW on the combined loss over independently sampled per-source minibatches.

    One stopping-rule step is one epoch over the smallest non-empty source;
    its loss is the mean minibatch loss over that epoch.
    """
    cfg = opt_config or TrainConfig()
    rng = np.random.default_rng(0) if rng is None else rng
    if d.is_empty:
        raise NoFeedbackError("no preferences or demonstrations to learn from")
    sizes = [n for n in (len(d.d_pos), len(d.d_neg), len(d.d_agent), len(d.prefs)) if n]
    smallest = min(sizes)
    per_epoch = math.ceil(smallest / min(smallest, cfg.batch_size))
    factors = dataset_factors(d, cfg.split_mode, cfg.beta)

    opt = AdamW(m.n_params, cfg.lr, cfg.weight_decay, cfg.betas, cfg.eps)
    params = m.params.copy()
    history, records = [], []
    reason = None
    while True:
        losses, unsmoothed = [], []
        det: dict = {}
        for _ in range(per_epoch):
            batch = encode(sample_batch(d, rng, cfg.batch_size), cfg.split_mode, cfg.beta)
            det = {}
            loss, grad = combined_loss(batch, m.with_params(params), factors, cfg.smooth_weight, True, det)
            params = opt.step(params, grad)
            losses.append(loss)
            unsmoothed.append(det["data_loss"])
        history.append(float(np.mean(losses)))
        rec = {"step": len(history), "combined": history[-1], "unsmoothed": float(np.mean(unsmoothed)),
               "smoothness": det["smoothness"]}
        for t in SOURCE_TAGS:
            rec[f"nll_{t}"] = det["nll"].get(t, 0.0)
        records.append(rec)
        if not math.isfinite(history[-1]):
            raise NumericError("non-finite training loss")
        stop, reason = should_stop(history, cfg.consecutive_needed, cfg.rel_tol, cfg.epoch_cap)
        if stop:
            break
    report = TrainReport(len(history), history[-1], records[-1]["unsmoothed"], reason, records)
    return m.with_params(params), report


LOSS_FIELDS = ["step", *[f"nll_{t}" for t in SOURCE_TAGS], "smoothness", "unsmoothed", "combined"]


def write_loss_records(path, records: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOSS_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in records:
            w.writerow(r)


def fit_orderings(
    m: RewardModel,
    orderings: Sequence[PartialOrdering],
    target_nll: float = math.log(2),
    lr: float = 0.05,
    max_steps: int = 20000,
) -> tuple[RewardModel, float, int]:
    """Full-batch Adam on the raw RRPO NLL until it drops below ``target_nll``."""
    b = RrpoBatch(list(orderings))
    ones = {t: 1.0 for t in SOURCE_TAGS}
    tb = gather(b.fragments)
    opt = AdamW(m.n_params, lr, 0.0)
    params = m.params.copy()
    for step in range(max_steps + 1):
        cur = m.with_params(params)
        R = np.add.reduceat(cur.transition_rewards(tb), tb.offsets)
        nll, dR = _source_terms(b, R, ones)
        total = sum(nll.values())
        if total < target_nll or step == max_steps:
            return cur, total, step
        params = opt.step(params, cur.backward(tb, dR[tb.segment]))
    raise AssertionError("unreachable")
