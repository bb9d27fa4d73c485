"""The LEOPARD outer loop, feedback-mixture sweeps, and results tables."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .agent import AgentConfig, Policy, evaluate_policy, random_rollouts, train_agent
from .core import TrajectoryPool
from .env import EnvSpec, ground_truth_reward_table
from .ordering import FeedbackDatasets, PartialOrdering
from .oracle import generate_demonstrations, get_preferences, preference_reward_fn, ranking_by_return
from .reward import RewardModel
from .rrpo import TrainConfig, TrainReport, train_reward_model

log = logging.getLogger(__name__)

STREAMS = ("env", "oracle", "agent", "model_init", "reward_train")


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent named generator derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


@dataclass
class ExperimentConfig:
    name: str = "leopard"
    env: str = "cliff_walking"
    horizon: int = 48
    fragment_len: int = 16
    n_iters: int = 8
    n_rollout_steps: int = 23_760  # 9 * 48 * 55: about 500 episodes, no leftover steps
    n_prefs: int = 64
    n_pos_demos: int = 2
    n_neg_demos: int = 0
    use_rankings: bool = True
    split_mode: bool = True
    seeds: list[int] = field(default_factory=lambda: list(range(16)))
    reward_kind: str = "mlp"
    hidden: list[int] = field(default_factory=lambda: [32, 32])
    train: TrainConfig = field(default_factory=TrainConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    prefs_new_first: bool = True
    demo_seed: int = 0
    demo_n_agents: int = 4
    demo_n_selected: int = 4
    demo_train_episodes: int = 400
    eval_rollouts: int = 8
    outlier_threshold: float = -3000.0

    def __post_init__(self):
        if isinstance(self.train, dict):
            tr = dict(self.train)
            if "betas" in tr:
                tr["betas"] = tuple(tr["betas"])
            self.train = TrainConfig(**tr)
        if isinstance(self.agent, dict):
            self.agent = AgentConfig(**self.agent)
        self.validate()

    def validate(self) -> None:
        if self.n_iters < 1:
            raise ValueError("n_iters must be at least 1")
        counts = (self.n_rollout_steps, self.n_prefs, self.n_pos_demos, self.n_neg_demos)
        if any(c < 0 for c in counts):
            raise ValueError("feedback and budget counts must be non-negative")
        if not (self.n_prefs or self.n_pos_demos or self.n_neg_demos):
            raise ValueError("at least one feedback count must be positive")
        if self.reward_kind not in ("mlp", "tabular"):
            raise ValueError(f"unknown reward_kind {self.reward_kind!r}")

    @property
    def spec(self) -> EnvSpec:
        return EnvSpec(self.env, self.horizon)

    @property
    def rollout_steps_per_iter(self) -> int:
        return self.n_rollout_steps // (self.n_iters + 1)

    @property
    def prefs_per_iter(self) -> int:
        return self.n_prefs // self.n_iters

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"]["betas"] = list(d["train"]["betas"])
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class IterationRecord:
    iteration: int
    gt_return: float
    train_report: TrainReport
    n_prefs: int
    outlier: bool
    agent_pool_size: int = 0
    env_steps: int = 0

    def row(self, run_id: str, seed: int) -> dict:
        return {
            "run_id": run_id,
            "seed": seed,
            "iteration": self.iteration,
            "gt_return": repr(float(self.gt_return)),
            "rm_steps": self.train_report.steps_taken,
            "rm_loss": repr(float(self.train_report.final_loss)),
            "outlier_flag": int(self.outlier),
        }


@lru_cache(maxsize=32)
def _cached_demos(env: str, horizon: int, polarity: str, n: int, seed: int,
                  n_agents: int, n_selected: int, episodes: int, agent_cfg: tuple):
    spec = EnvSpec(env, horizon)
    trajs, _ = generate_demonstrations(
        spec, n, polarity, stream(seed, f"demos-{polarity}"), n_agents, n_selected, episodes,
        AgentConfig(*agent_cfg),
    )
    return tuple((t.states, t.actions) for t in trajs)


def demonstrations(config: ExperimentConfig, polarity: str, ids) -> tuple[TrajectoryPool, PartialOrdering | None]:
    """Demonstrations shared by every seed of a config (generated once from ``demo_seed``)."""
    n = config.n_pos_demos if polarity == "positive" else config.n_neg_demos
    if n == 0:
        return TrajectoryPool(), None
    raw = _cached_demos(
        config.env, config.horizon, polarity, n, config.demo_seed, config.demo_n_agents,
        config.demo_n_selected, config.demo_train_episodes, dataclasses.astuple(config.agent),
    )
    spec = config.spec
    source = "demo_positive" if polarity == "positive" else "demo_negative"
    trajs = [spec.make_trajectory(next(ids), s, a, source) for s, a in raw]
    ranking = ranking_by_return(trajs, ground_truth_reward_table(spec), config.train.beta)
    return TrajectoryPool(trajs), ranking if config.use_rankings else None


def _init_model(config: ExperimentConfig, seed: int) -> RewardModel:
    spec = config.spec
    if config.reward_kind == "tabular":
        return RewardModel.tabular(spec.n_states, spec.action_count)
    return RewardModel.mlp(spec.state_dim, spec.action_count, config.hidden, stream(seed, "model_init"))


def leopard_run(config: ExperimentConfig, seed: int, artifacts: dict | None = None) -> list[IterationRecord]:
    """One full LEOPARD run: random rollouts, then ``n_iters`` of feedback, reward fitting and RL.

    If ``artifacts`` is given it receives the final ``model``, ``policy``,
    ``data`` (the feedback datasets) and ``trace``, a per-iteration snapshot of
    the preference keys, pool ids and environment steps used so far.
    """
    spec = config.spec
    ids = itertools.count()
    env_rng, oracle_rng, agent_rng = stream(seed, "env"), stream(seed, "oracle"), stream(seed, "agent")
    train_rng = stream(seed, "reward_train")
    pref_fn = preference_reward_fn(spec)

    d_pos, rank_pos = demonstrations(config, "positive", ids)
    d_neg, rank_neg = demonstrations(config, "negative", ids)
    data = FeedbackDatasets(d_pos, d_neg, TrajectoryPool(), [], rank_pos, rank_neg)

    steps = config.rollout_steps_per_iter
    train_cfg = dataclasses.replace(config.train, split_mode=config.split_mode)
    policy = Policy.initial(spec, config.agent.temp_start)
    model = _init_model(config, seed)
    new = random_rollouts(spec, steps, env_rng, ids)
    env_steps = sum(t.length for t in new)
    trace = []

    records = []
    for it in range(config.n_iters):
        try:
            data.prefs.extend(get_preferences(
                config.prefs_per_iter, new, data.d_agent.trajectories(), config.fragment_len,
                pref_fn, oracle_rng, config.prefs_new_first,
            ))
            data.d_agent.extend(new, generation=it)
            model, report = train_reward_model(model, data, train_cfg, train_rng)
            policy, new = train_agent(policy, model, spec, steps, agent_rng, config.agent, ids)
            env_steps += sum(t.length for t in new)
            ret = evaluate_policy(policy, spec, config.eval_rollouts)
        except Exception as exc:
            raise type(exc)(f"iteration {it} of run {config.name}/seed {seed}: {exc}") from exc
        records.append(IterationRecord(
            it, ret, report, len(data.prefs), it >= 1 and ret < config.outlier_threshold,
            len(data.d_agent), env_steps,
        ))
        trace.append({
            "prefs": [(a.key, b.key) for a, b in data.prefs],
            "agent_ids": data.d_agent.ids,
            "pos_ids": data.d_pos.ids,
            "neg_ids": data.d_neg.ids,
            "env_steps": env_steps,
        })
        log.info("%s seed=%d iter=%d return=%.1f rm_steps=%d", config.name, seed, it, ret, report.steps_taken)
    if artifacts is not None:
        artifacts.update(model=model, policy=policy, data=data, trace=trace)
    return records


def check_accounting(config: ExperimentConfig, records: Sequence[IterationRecord], trace: Sequence[dict]) -> list[str]:
    """Budget floors, append-only preferences and monotone pools; returns the violations found."""
    bad = []
    h = config.horizon
    per_iter = config.rollout_steps_per_iter // h * h
    if len(records) != config.n_iters or len(trace) != config.n_iters:
        bad.append(f"expected {config.n_iters} iterations, got {len(records)}")
    for it, (rec, snap) in enumerate(zip(records, trace)):
        if snap["env_steps"] != (it + 2) * per_iter:
            bad.append(f"iteration {it}: {snap['env_steps']} env steps, expected {(it + 2) * per_iter}")
        if len(snap["prefs"]) != (it + 1) * config.prefs_per_iter or rec.n_prefs != len(snap["prefs"]):
            bad.append(f"iteration {it}: {len(snap['prefs'])} preferences, expected {(it + 1) * config.prefs_per_iter}")
        if it == 0:
            continue
        prev = trace[it - 1]
        if snap["prefs"][: len(prev["prefs"])] != prev["prefs"]:
            bad.append(f"iteration {it}: earlier preferences changed")
        if snap["agent_ids"][: len(prev["agent_ids"])] != prev["agent_ids"] or len(snap["agent_ids"]) <= len(prev["agent_ids"]):
            bad.append(f"iteration {it}: agent pool did not grow append-only")
        if snap["pos_ids"] != prev["pos_ids"] or snap["neg_ids"] != prev["neg_ids"]:
            bad.append(f"iteration {it}: demonstrations changed")
    if trace and trace[-1]["env_steps"] > (config.n_iters + 1) * config.rollout_steps_per_iter:
        bad.append("environment steps exceed the budget")
    return bad


# --- sweeps ---------------------------------------------------------------------------


def mixture_configs(base: ExperimentConfig, max_prefs: int = 128, max_pos: int = 4, max_neg: int = 4) -> list[ExperimentConfig]:
    """The five feedback mixtures; a mixture of k types gets 1/k of each type's maximum."""
    mixes = {
        "prefs": ("prefs",),
        "pos_demos": ("pos",),
        "prefs_pos": ("prefs", "pos"),
        "pos_neg": ("pos", "neg"),
        "prefs_pos_neg": ("prefs", "pos", "neg"),
    }
    out = []
    for name, kinds in mixes.items():
        k = len(kinds)
        out.append(base.replace(
            name=name,
            n_prefs=max_prefs // k if "prefs" in kinds else 0,
            n_pos_demos=max_pos // k if "pos" in kinds else 0,
            n_neg_demos=max_neg // k if "neg" in kinds else 0,
        ))
    return out


def is_outlier_run(records: Sequence[IterationRecord]) -> bool:
    return any(r.outlier for r in records)


def summarize(config_id: str, runs: dict[int, list[IterationRecord]]) -> list[dict]:
    """Mean and standard error (std / sqrt(n)) per iteration over non-outlier runs."""
    kept = [recs for recs in runs.values() if not is_outlier_run(recs)]
    n_out = len(runs) - len(kept)
    n_iters = max((len(r) for r in runs.values()), default=0)
    rows = []
    for it in range(n_iters):
        vals = np.array([recs[it].gt_return for recs in kept if len(recs) > it])
        n = len(vals)
        mean = float(vals.mean()) if n else math.nan
        std = float(vals.std(ddof=1)) if n > 1 else 0.0
        rows.append({
            "config_id": config_id,
            "iteration": it,
            "mean": repr(mean),
            "stderr": repr(std / math.sqrt(n) if n else math.nan),
            "stderr_var": repr(std * std / math.sqrt(n) if n else math.nan),
            "n_kept": n,
            "n_outliers": n_out,
        })
    return rows


@dataclass
class SweepResult:
    runs: dict[tuple[str, int], list[IterationRecord]]
    summary: list[dict]

    def iteration_rows(self) -> list[dict]:
        rows = []
        for (cid, seed), recs in self.runs.items():
            rows.extend(r.row(f"{cid}-s{seed}", seed) for r in recs)
        return rows


def sweep(configs: Sequence[ExperimentConfig], seeds: Iterable[int] | None = None) -> SweepResult:
    """Every (config, seed) cell run independently; configs need distinct names."""
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ValueError("config names must be unique")
    runs = {}
    summary = []
    for cfg in configs:
        cfg_seeds = list(cfg.seeds if seeds is None else seeds)
        per_seed = {s: leopard_run(cfg, s) for s in cfg_seeds}
        for s, recs in per_seed.items():
            runs[(cfg.name, s)] = recs
        summary.extend(summarize(cfg.name, per_seed))
    return SweepResult(runs, summary)


ITERATION_FIELDS = ["run_id", "seed", "iteration", "gt_return", "rm_steps", "rm_loss", "outlier_flag"]
SUMMARY_FIELDS = ["config_id", "iteration", "mean", "stderr", "stderr_var", "n_kept", "n_outliers"]


def to_csv(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def records_to_json(runs: dict[tuple[str, int], list[IterationRecord]]) -> list[dict]:
    out = []
    for (cid, seed), recs in runs.items():
        for r in recs:
            row = r.row(f"{cid}-s{seed}", seed)
            row.update({
                "config_id": cid,
                "gt_return": float(r.gt_return),
                "rm_loss": float(r.train_report.final_loss),
                "rm_loss_unsmoothed": float(r.train_report.final_loss_unsmoothed),
                "rm_stop_reason": r.train_report.stop_reason,
                "n_prefs": r.n_prefs,
                "agent_pool_size": r.agent_pool_size,
                "env_steps": r.env_steps,
            })
            out.append(row)
    return out


def records_from_json(rows: Sequence[dict]) -> dict[tuple[str, int], list[IterationRecord]]:
    runs: dict[tuple[str, int], list[IterationRecord]] = {}
    for row in rows:
        rep = TrainReport(int(row["rm_steps"]), float(row["rm_loss"]), float(row.get("rm_loss_unsmoothed", math.nan)),
                          row.get("rm_stop_reason", ""))
        rec = IterationRecord(int(row["iteration"]), float(row["gt_return"]), rep, int(row.get("n_prefs", 0)),
                              bool(int(row["outlier_flag"])), int(row.get("agent_pool_size", 0)),
                              int(row.get("env_steps", 0)))
        runs.setdefault((row["config_id"], int(row["seed"])), []).append(rec)
    return runs
