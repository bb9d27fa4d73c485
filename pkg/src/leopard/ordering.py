"""Strict partial orderings over fragments and the feedback encoders.

Every encoder returns a transitively closed ordering. Internally the relation
is a boolean matrix ``less[a, b]`` meaning ``items[a] < items[b]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Fragment, Trajectory, TrajectoryPool, make_fragment
from .errors import (
    BoundsError,
    DegenerateFeedbackError,
    InvalidOrderingError,
    NoFeedbackError,
    UnknownItemError,
)

DEFAULT_BETA = 1.0


@dataclass(frozen=True)
class PartialOrdering:
    """A strict partial order over fragments with rationality coefficient ``beta``.

    ``less_than`` holds ``(lesser, greater)`` pairs. Construction checks
    irreflexivity, membership and ``beta > 0``; acyclicity is checked by
    :func:`transitive_closure`, which every encoder applies.
    """

    items: tuple[Fragment, ...]
    less_than: frozenset = field(default_factory=frozenset)
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        items = tuple(dict.fromkeys(self.items))
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "less_than", frozenset(self.less_than))
        if not self.beta > 0:
            raise InvalidOrderingError(f"beta must be positive, got {self.beta}")
        index = self.index
        for lo, hi in self.less_than:
            if lo == hi:
                raise InvalidOrderingError(f"reflexive pair on {lo.key}")
            if lo not in index or hi not in index:
                raise UnknownItemError("edge references a fragment outside items")

    @cached_property
    def index(self) -> dict[Fragment, int]:
        return {f: i for i, f in enumerate(self.items)}

    @cached_property
    def less_matrix(self) -> np.ndarray:
        """``M[a, b]`` is True iff ``items[a] < items[b]``."""
        n = len(self.items)
        m = np.zeros((n, n), dtype=bool)
        if self.less_than:
            idx = self.index
            pairs = np.array([(idx[lo], idx[hi]) for lo, hi in self.less_than])
            m[pairs[:, 0], pairs[:, 1]] = True
        m.setflags(write=False)
        return m

    @property
    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.less_matrix)
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def is_closed(self) -> bool:
        m = self.less_matrix
        return not np.any((m.astype(np.int64) @ m.astype(np.int64) > 0) & ~m)

    def __len__(self) -> int:
        return len(self.items)

    def restrict(self, keep: Iterable[Fragment]) -> "PartialOrdering":
        """Induced sub-order on ``keep`` (closure is preserved)."""
        keep = set(keep)
        items = [f for f in self.items if f in keep]
        pairs = {(lo, hi) for lo, hi in self.less_than if lo in keep and hi in keep}
        return PartialOrdering(tuple(items), frozenset(pairs), self.beta)

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "items": [f.to_ref() for f in self.items],
            "edges": [list(e) for e in sorted(self.edges)],
        }

    @classmethod
    def from_json(cls, d: dict, trajectories: dict[int, Trajectory]) -> "PartialOrdering":
        items = [
            make_fragment(trajectories[int(r["trajectory_id"])], int(r["start"]), int(r["length"]))
            for r in d["items"]
        ]
        pairs = {(items[a], items[b]) for a, b in d["edges"]}
        return transitive_closure(cls(tuple(items), frozenset(pairs), float(d["beta"])))


def _from_matrix(items: Sequence[Fragment], m: np.ndarray, beta: float) -> PartialOrdering:
    rows, cols = np.nonzero(m)
    pairs = frozenset((items[a], items[b]) for a, b in zip(rows.tolist(), cols.tolist()))
    return PartialOrdering(tuple(items), pairs, beta)


def closure_matrix(m: np.ndarray) -> np.ndarray:
    """Warshall transitive closure of a boolean relation matrix."""
    r = np.array(m, dtype=bool, copy=True)
    for k in range(r.shape[0]):
        col = r[:, k]
        if col.any():
            r[col] |= r[k]
    return r


def transitive_closure(o: PartialOrdering) -> PartialOrdering:
    r = closure_matrix(o.less_matrix)
    if np.any(np.diag(r)):
        bad = o.items[int(np.argmax(np.diag(r)))]
        raise InvalidOrderingError(f"cycle through fragment {bad.key}")
    return _from_matrix(o.items, r, o.beta)


def ordering_from_pairs(
    items: Iterable[Fragment], pairs: Iterable[tuple[Fragment, Fragment]], beta: float = DEFAULT_BETA
) -> PartialOrdering:
    return transitive_closure(PartialOrdering(tuple(items), frozenset(pairs), beta))


def predecessors(o: PartialOrdering, item: Fragment) -> set[Fragment]:
    if item not in o.index:
        raise UnknownItemError(f"fragment {item.key} not in ordering")
    return {lo for lo, hi in o.less_than if hi == item}


@dataclass
class FeedbackDatasets:
    """Pools of demonstrations and agent behaviour plus the preference set.

    ``prefs`` holds ``(preferred, dispreferred)`` fragment pairs.
    """

    d_pos: TrajectoryPool = field(default_factory=TrajectoryPool)
    d_neg: TrajectoryPool = field(default_factory=TrajectoryPool)
    d_agent: TrajectoryPool = field(default_factory=TrajectoryPool)
    prefs: list[tuple[Fragment, Fragment]] = field(default_factory=list)
    rank_pos: PartialOrdering | None = None
    rank_neg: PartialOrdering | None = None

    def __post_init__(self):
        pos_keys = {f for f in self.d_pos.fragments()}
        neg_keys = {f for f in self.d_neg.fragments()}
        if self.rank_pos is not None and not set(self.rank_pos.items) <= pos_keys:
            raise UnknownItemError("rank_pos relates fragments outside d_pos")
        if self.rank_neg is not None and not set(self.rank_neg.items) <= neg_keys:
            raise UnknownItemError("rank_neg relates fragments outside d_neg")

    @property
    def is_empty(self) -> bool:
        return not (len(self.d_pos) or len(self.d_neg) or self.prefs)


def from_preference(preferred: Fragment, other: Fragment, beta: float = DEFAULT_BETA) -> PartialOrdering:
    if preferred == other:
        raise DegenerateFeedbackError(f"fragment {preferred.key} compared with itself")
    return PartialOrdering((other, preferred), frozenset({(other, preferred)}), beta)


def demos_vs_agent(
    d: FeedbackDatasets, split_mode: bool = False, beta: float = DEFAULT_BETA
) -> list[PartialOrdering]:
    """Encode demonstrations against agent behaviour.

    Unsplit: one ordering with ``neg < agent < pos`` plus the demo rankings.
    Split: ``{agent < pos} | rank_pos`` and ``{neg < pos} | rank_neg``, with
    no agent-vs-negative comparisons. Orderings with no edges are dropped.
    """
    if not len(d.d_pos) and not len(d.d_neg):
        raise NoFeedbackError("no demonstrations to encode")
    pos, neg, agent = d.d_pos.fragments(), d.d_neg.fragments(), d.d_agent.fragments()
    rank_pos = d.rank_pos.less_than if d.rank_pos is not None else frozenset()
    rank_neg = d.rank_neg.less_than if d.rank_neg is not None else frozenset()

    if not split_mode:
        pairs = set(rank_pos) | set(rank_neg)
        pairs |= {(n, a) for n in neg for a in agent}
        pairs |= {(a, p) for a in agent for p in pos}
        out = [ordering_from_pairs(neg + agent + pos, pairs, beta)]
    else:
        first = ordering_from_pairs(agent + pos, {(a, p) for a in agent for p in pos} | set(rank_pos), beta)
        second = ordering_from_pairs(neg + pos, {(n, p) for n in neg for p in pos} | set(rank_neg), beta)
        out = [first, second]
    return [o for o in out if o.less_than]


def from_ranking(ordered_fragments: Sequence[Fragment], beta: float = DEFAULT_BETA) -> PartialOrdering:
    """Total order with ``ordered_fragments[0]`` greatest."""
    frags = list(ordered_fragments)
    if len(set(frags)) != len(frags):
        raise InvalidOrderingError("ranking contains duplicate fragments")
    if len(frags) < 2:
        raise InvalidOrderingError("ranking needs at least two fragments")
    n = len(frags)
    m = np.triu(np.ones((n, n), dtype=bool), k=1).T  # m[a, b] = a ranked below b
    return _from_matrix(frags, m, beta)


def from_improvement(agent: Fragment, improved: Fragment, beta: float = DEFAULT_BETA) -> PartialOrdering:
    if agent == improved:
        raise DegenerateFeedbackError("improvement identical to the original")
    return PartialOrdering((agent, improved), frozenset({(agent, improved)}), beta)


def frozen_trajectory(traj: Trajectory, stop_time: int, noop_action: int = 0, uid: int | None = None) -> Trajectory:
    """``traj`` up to ``stop_time`` followed by the state at ``stop_time`` held for the rest of the horizon."""
    if not 0 <= stop_time < traj.length:
        raise BoundsError(f"stop time {stop_time} outside [0, {traj.length})")
    states = traj.states.copy()
    states[stop_time:] = traj.states[stop_time]
    feats = traj.features.copy()
    feats[stop_time:] = traj.features[stop_time]
    actions = traj.actions.copy()
    actions[stop_time:] = noop_action
    return Trajectory(-1 - traj.uid if uid is None else uid, states, actions, feats, traj.source)


def from_off(
    traj: Trajectory, stop_time: int, beta: float = DEFAULT_BETA, noop_action: int = 0, uid: int | None = None
) -> PartialOrdering:
    """Switching the robot off at ``stop_time`` beats letting it continue."""
    frozen = frozen_trajectory(traj, stop_time, noop_action, uid)
    a, f = traj.whole(), frozen.whole()
    return PartialOrdering((a, f), frozenset({(a, f)}), beta)


def from_credit_assignment(
    traj: Trajectory, window: int, chosen_start: int, beta: float = DEFAULT_BETA
) -> PartialOrdering:
    """The chosen length-``window`` slice beats every other slice of that length."""
    if not 1 <= window <= traj.length:
        raise BoundsError(f"window {window} outside [1, {traj.length}]")
    if not 0 <= chosen_start <= traj.length - window:
        raise BoundsError(f"chosen window start {chosen_start} out of range")
    windows = [make_fragment(traj, i, window) for i in range(traj.length - window + 1)]
    best = windows[chosen_start]
    pairs = {(w, best) for w in windows if w != best}
    return PartialOrdering(tuple(windows), frozenset(pairs), beta)


def from_proxy_reward(
    fragments: Sequence[Fragment], proxy: Callable[[Fragment], float], beta: float = DEFAULT_BETA
) -> PartialOrdering:
    """Order agent fragments by a designer-supplied proxy reward; ties stay incomparable."""
    frags = list(dict.fromkeys(fragments))
    vals = np.array([proxy(f) for f in frags], dtype=np.float64)
    m = vals[:, None] < vals[None, :]
    return _from_matrix(frags, m, beta)


def from_reward_punishment(
    fragments: Sequence[Fragment], signals: Sequence[int], beta: float = DEFAULT_BETA
) -> PartialOrdering:
    """Every punished (-1) fragment sits below every rewarded (+1) one."""
    frags = list(fragments)
    if len(frags) != len(signals):
        raise ValueError("one signal per fragment required")
    if len(set(frags)) != len(frags):
        raise InvalidOrderingError("duplicate fragments")
    sig = np.asarray(signals)
    if not np.all(np.isin(sig, (-1, 1))):
        raise ValueError("signals must be +1 or -1")
    m = (sig[:, None] == -1) & (sig[None, :] == 1)
    return _from_matrix(frags, m, beta)
