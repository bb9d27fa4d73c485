"""Trajectory, fragment and pool primitives."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import BoundsError, ShapeError

SOURCES = ("agent", "demo_positive", "demo_negative", "random")


@dataclass(frozen=True)
class Transition:
    """One environment step ``(state, action, next_state)``.

    ``state_id``/``next_state_id`` are the discrete cell indices behind the
    feature vectors; tabular reward models key on them.
    """

    state: np.ndarray
    action: int
    next_state: np.ndarray
    state_id: int = -1
    next_state_id: int = -1

    def __post_init__(self):
        if np.shape(self.state) != np.shape(self.next_state):
            raise ShapeError(
                f"state and next_state dims differ: {np.shape(self.state)} vs {np.shape(self.next_state)}"
            )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A fixed-horizon rollout stored column-wise.

    ``states`` holds ``length + 1`` cell ids, ``features`` the matching
    ``(length + 1, state_dim)`` encodings, and ``actions`` the ``length``
    actions taken between them. Chaining holds by construction.
    """

    uid: int
    states: np.ndarray
    actions: np.ndarray
    features: np.ndarray
    source: str = "agent"

    def __post_init__(self):
        states = np.ascontiguousarray(self.states, dtype=np.int64)
        actions = np.ascontiguousarray(self.actions, dtype=np.int64)
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        if states.ndim != 1 or actions.ndim != 1 or states.shape[0] != actions.shape[0] + 1:
            raise ShapeError("need len(states) == len(actions) + 1")
        if features.ndim != 2 or features.shape[0] != states.shape[0]:
            raise ShapeError("features must have one row per state")
        if actions.shape[0] < 1:
            raise ShapeError("trajectory needs at least one transition")
        if self.source not in SOURCES:
            raise ValueError(f"unknown trajectory source {self.source!r}")
        for name, arr in (("states", states), ("actions", actions), ("features", features)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    @property
    def state_dim(self) -> int:
        return int(self.features.shape[1])

    def transition(self, k: int) -> Transition:
        if not 0 <= k < self.length:
            raise BoundsError(f"transition {k} outside trajectory of length {self.length}")
        return Transition(
            self.features[k], int(self.actions[k]), self.features[k + 1],
            int(self.states[k]), int(self.states[k + 1]),
        )

    @property
    def transitions(self) -> list[Transition]:
        return [self.transition(k) for k in range(self.length)]

    def whole(self) -> "Fragment":
        return Fragment(self, self.uid, 0, self.length)

    def with_source(self, source: str) -> "Trajectory":
        return Trajectory(self.uid, self.states, self.actions, self.features, source)

    def to_dict(self) -> dict:
        return {
            "id": self.uid,
            "source": self.source,
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "features": self.features.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(int(d["id"]), np.array(d["states"]), np.array(d["actions"]),
                   np.array(d["features"], dtype=np.float64), d.get("source", "agent"))


@dataclass(frozen=True)
class Fragment:
    """View of the half-open transition range ``[start, start + length)``.

    Identity is ``(trajectory_id, start, length)``; the trajectory object is
    carried along for evaluation but ignored by ``==`` and ``hash``.
    """

    traj: Trajectory = field(compare=False, hash=False, repr=False)
    trajectory_id: int
    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.trajectory_id, self.start, self.length)

    @property
    def transitions(self) -> list[Transition]:
        return [self.traj.transition(k) for k in range(self.start, self.stop)]

    def to_ref(self) -> dict:
        return {"trajectory_id": self.trajectory_id, "start": self.start, "length": self.length}


def make_fragment(traj: Trajectory, start: int, length: int) -> Fragment:
    if length < 1 or start < 0 or start + length > traj.length:
        raise BoundsError(
            f"fragment [{start}, {start + length}) does not fit trajectory of length {traj.length}"
        )
    return Fragment(traj, traj.uid, int(start), int(length))


def fragment_from_ref(ref: dict, trajectories: dict[int, Trajectory]) -> Fragment:
    return make_fragment(trajectories[int(ref["trajectory_id"])], int(ref["start"]), int(ref["length"]))


def is_strict_subfragment(a: Fragment, b: Fragment) -> bool:
    return (
        a.trajectory_id == b.trajectory_id
        and b.start <= a.start
        and a.stop <= b.stop
        and a.key != b.key
    )


def full_fragments(fragments: Iterable[Fragment]) -> list[Fragment]:
    """Fragments not strictly contained in any other fragment of the collection.

    Duplicates collapse to one entry; input order is kept otherwise.
    """
    unique = list(dict.fromkeys(fragments))
    by_traj: dict[int, list[Fragment]] = {}
    for f in unique:
        by_traj.setdefault(f.trajectory_id, []).append(f)
    out = []
    for f in unique:
        siblings = by_traj[f.trajectory_id]
        if not any(is_strict_subfragment(f, g) for g in siblings):
            out.append(f)
    return out


class TrajectoryPool:
    """Append-only indexed collection of trajectories.

    Each trajectory is tagged with the generation (driver iteration) it was
    added in; generations must be non-decreasing in insertion order.
    """

    def __init__(self, trajectories: Iterable[Trajectory] = (), generation: int = 0):
        self._trajs: dict[int, Trajectory] = {}
        self._generation: dict[int, int] = {}
        self.extend(trajectories, generation)

    def add(self, traj: Trajectory, generation: int = 0) -> None:
        if traj.uid in self._trajs:
            raise ValueError(f"trajectory id {traj.uid} already in pool")
        if self._generation and generation < self.last_generation:
            raise ValueError("generation must be monotone in insertion order")
        self._trajs[traj.uid] = traj
        self._generation[traj.uid] = generation

    def extend(self, trajs: Iterable[Trajectory], generation: int = 0) -> None:
        for t in trajs:
            self.add(t, generation)

    @property
    def last_generation(self) -> int:
        return next(reversed(self._generation.values())) if self._generation else 0

    def generation(self, uid: int) -> int:
        return self._generation[uid]

    @property
    def ids(self) -> list[int]:
        return list(self._trajs)

    def __getitem__(self, uid: int) -> Trajectory:
        return self._trajs[uid]

    def __contains__(self, uid: int) -> bool:
        return uid in self._trajs

    def __len__(self) -> int:
        return len(self._trajs)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self._trajs.values())

    def trajectories(self) -> list[Trajectory]:
        return list(self._trajs.values())

    def fragments(self) -> list[Fragment]:
        return [t.whole() for t in self._trajs.values()]


def save_trajectories(path, trajectories: Sequence[Trajectory]) -> None:
    """Write one JSON object per line."""
    with open(path, "w") as fh:
        for t in trajectories:
            fh.write(json.dumps(t.to_dict()) + "\n")


def load_trajectories(path) -> list[Trajectory]:
    with open(path) as fh:
        return [Trajectory.from_dict(json.loads(line)) for line in fh if line.strip()]
