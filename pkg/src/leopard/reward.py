"""Parameterised reward functions over transitions with exact reverse-mode gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Fragment, Transition
from .errors import NumericError, ShapeError


@dataclass(frozen=True)
class TransitionBatch:
    """Column-wise transitions of several fragments laid end to end.

    ``offsets[i]`` is the first row of fragment ``i``; fragment ``i`` owns
    rows ``offsets[i]:offsets[i] + lengths[i]``.
    """

    state_ids: np.ndarray
    actions: np.ndarray
    features: np.ndarray
    next_features: np.ndarray
    offsets: np.ndarray
    lengths: np.ndarray

    @property
    def n_transitions(self) -> int:
        return int(self.actions.shape[0])

    @property
    def segment(self) -> np.ndarray:
        """Fragment index of every row."""
        return np.repeat(np.arange(len(self.lengths)), self.lengths)


def gather(fragments: Sequence[Fragment]) -> TransitionBatch:
    if not len(fragments):
        raise ShapeError("cannot gather an empty fragment list")
    sids, acts, feats, nfeats, lengths = [], [], [], [], []
    for f in fragments:
        t = f.traj
        s, e = f.start, f.stop
        sids.append(t.states[s:e])
        acts.append(t.actions[s:e])
        feats.append(t.features[s:e])
        nfeats.append(t.features[s + 1 : e + 1])
        lengths.append(f.length)
    lengths = np.array(lengths, dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(lengths)[:-1])).astype(np.int64)
    return TransitionBatch(
        np.concatenate(sids), np.concatenate(acts),
        np.concatenate(feats), np.concatenate(nfeats), offsets, lengths,
    )


def batch_from_transitions(transitions: Sequence[Transition]) -> TransitionBatch:
    n = len(transitions)
    return TransitionBatch(
        np.array([t.state_id for t in transitions], dtype=np.int64),
        np.array([t.action for t in transitions], dtype=np.int64),
        np.array([t.state for t in transitions], dtype=np.float64).reshape(n, -1),
        np.array([t.next_state for t in transitions], dtype=np.float64).reshape(n, -1),
        np.arange(n, dtype=np.int64),
        np.ones(n, dtype=np.int64),
    )


class RewardModel:
    """``R_theta(s, a, s')`` as a table over ``(state_id, action)`` or a tanh MLP.

    The MLP input is ``[phi(s), onehot(a), phi(s')]``. Parameters live in a
    single flat vector; ``arch`` records everything needed to unflatten it.
    """

    def __init__(self, kind: str, params: np.ndarray, arch: dict):
        if kind not in ("tabular", "mlp"):
            raise ValueError(f"unknown reward model kind {kind!r}")
        self.kind = kind
        self.arch = dict(arch)
        params = np.array(params, dtype=np.float64)
        if params.ndim != 1 or params.shape[0] != self.n_params_for(kind, self.arch):
            raise ShapeError(
                f"expected {self.n_params_for(kind, self.arch)} parameters, got {params.shape}"
            )
        if not np.all(np.isfinite(params)):
            raise NumericError("non-finite reward model parameters")
        self.params = params

    # construction -----------------------------------------------------

    @classmethod
    def tabular(cls, n_states: int, n_actions: int, params=None) -> "RewardModel":
        arch = {"n_states": int(n_states), "n_actions": int(n_actions)}
        if params is None:
            params = np.zeros(n_states * n_actions)
        return cls("tabular", np.ravel(params), arch)

    @classmethod
    def mlp(
        cls,
        state_dim: int,
        n_actions: int,
        hidden: Sequence[int] = (32, 32),
        rng: np.random.Generator | None = None,
    ) -> "RewardModel":
        rng = np.random.default_rng(0) if rng is None else rng
        widths = [2 * state_dim + n_actions, *hidden, 1]
        arch = {"state_dim": int(state_dim), "n_actions": int(n_actions), "widths": widths}
        chunks = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
            chunks.append(rng.uniform(-bound, bound, size=fan_out))
        return cls("mlp", np.concatenate(chunks), arch)

    @staticmethod
    def n_params_for(kind: str, arch: dict) -> int:
        if kind == "tabular":
            return arch["n_states"] * arch["n_actions"]
        w = arch["widths"]
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    def with_params(self, params: np.ndarray) -> "RewardModel":
        return RewardModel(self.kind, params, self.arch)

    def copy(self) -> "RewardModel":
        return self.with_params(self.params.copy())

    @property
    def table(self) -> np.ndarray:
        return self.params.reshape(self.arch["n_states"], self.arch["n_actions"])

    def _layers(self, params=None):
        params = self.params if params is None else params
        w = self.arch["widths"]
        out, i = [], 0
        for fan_in, fan_out in zip(w[:-1], w[1:]):
            W = params[i : i + fan_in * fan_out].reshape(fan_in, fan_out)
            i += fan_in * fan_out
            b = params[i : i + fan_out]
            i += fan_out
            out.append((W, b))
        return out

    # evaluation -------------------------------------------------------

    def _check(self, batch: TransitionBatch) -> None:
        if self.kind == "tabular":
            ns, na = self.arch["n_states"], self.arch["n_actions"]
            if batch.n_transitions and (
                batch.state_ids.min() < 0 or batch.state_ids.max() >= ns
                or batch.actions.min() < 0 or batch.actions.max() >= na
            ):
                raise ShapeError("state id or action outside the reward table")
        else:
            d = self.arch["state_dim"]
            if batch.features.shape[1] != d or batch.next_features.shape[1] != d:
                raise ShapeError(f"feature dim {batch.features.shape[1]} != model input dim {d}")
            if batch.n_transitions and (batch.actions.min() < 0 or batch.actions.max() >= self.arch["n_actions"]):
                raise ShapeError("action outside the model's action range")

    def _inputs(self, batch: TransitionBatch) -> np.ndarray:
        onehot = np.zeros((batch.n_transitions, self.arch["n_actions"]))
        onehot[np.arange(batch.n_transitions), batch.actions] = 1.0
        return np.concatenate([batch.features, onehot, batch.next_features], axis=1)

    def _forward(self, x: np.ndarray):
        acts = [x]
        layers = self._layers()
        h = x
        for W, b in layers[:-1]:
            h = np.tanh(h @ W + b)
            acts.append(h)
        W, b = layers[-1]
        return (h @ W + b)[:, 0], acts

    def transition_rewards(self, batch: TransitionBatch) -> np.ndarray:
        self._check(batch)
        if self.kind == "tabular":
            return self.table[batch.state_ids, batch.actions]
        return self._forward(self._inputs(batch))[0]

    def backward(self, batch: TransitionBatch, upstream: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(upstream * transition_rewards(batch))`` w.r.t. the parameters."""
        self._check(batch)
        upstream = np.asarray(upstream, dtype=np.float64)
        if self.kind == "tabular":
            grad = np.zeros_like(self.table)
            np.add.at(grad, (batch.state_ids, batch.actions), upstream)
            return grad.ravel()
        _, acts = self._forward(self._inputs(batch))
        layers = self._layers()
        grads = []
        delta = upstream[:, None]
        for li in range(len(layers) - 1, -1, -1):
            W, _ = layers[li]
            a = acts[li]
            grads.append(delta.sum(axis=0))
            grads.append((a.T @ delta).ravel())
            if li:
                delta = (delta @ W.T) * (1.0 - a * a)
        return np.concatenate(grads[::-1])

    # serialisation ----------------------------------------------------

    def to_json(self) -> dict:
        return {"kind": self.kind, "arch": self.arch, "params": self.params.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "RewardModel":
        return cls(d["kind"], np.array(d["params"], dtype=np.float64), d["arch"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "RewardModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def reward_of_transition(m: RewardModel, t: Transition) -> float:
    return float(m.transition_rewards(batch_from_transitions([t]))[0])


def fragment_rewards(m: RewardModel, fragments: Sequence[Fragment], batch: TransitionBatch | None = None) -> np.ndarray:
    """Summed per-transition reward of each fragment."""
    batch = gather(fragments) if batch is None else batch
    r = m.transition_rewards(batch)
    return np.add.reduceat(r, batch.offsets) if len(r) else np.zeros(0)


def reward_of_fragment(m: RewardModel, f: Fragment) -> float:
    return float(fragment_rewards(m, [f])[0])


def check_finite(grad: np.ndarray) -> np.ndarray:
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NumericError(f"non-finite gradient at parameter index {int(bad[0])}")
    return grad


def gradient(m: RewardModel, weighted_terms: Iterable[tuple[Fragment, float]]) -> np.ndarray:
    """Exact gradient of ``sum(coef * R(fragment))`` with respect to the parameters."""
    terms = list(weighted_terms)
    if not terms:
        return np.zeros(m.n_params)
    frags = [f for f, _ in terms]
    coefs = np.array([c for _, c in terms], dtype=np.float64)
    batch = gather(frags)
    return check_finite(m.backward(batch, coefs[batch.segment]))
