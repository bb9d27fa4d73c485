"""Command line: ``leopard {train,sweep,verify,export}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import driver
from .core import save_trajectories
from .rrpo import encode, write_loss_records
from .verify import verify_all


def _seeds(text: str) -> list[int]:
    """``"0-15"`` or ``"0,3,7"``."""
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _config(path: str | None) -> driver.ExperimentConfig:
    return driver.ExperimentConfig.load(path) if path else driver.ExperimentConfig()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_train(args) -> int:
    cfg = _config(args.config)
    out = Path(args.out)
    art: dict = {}
    records = driver.leopard_run(cfg, args.seed, art)
    runs = {(cfg.name, args.seed): records}
    _write(out / "iterations.csv", driver.to_csv(driver.SweepResult(runs, []).iteration_rows(), driver.ITERATION_FIELDS))
    _write(out / "records.json", json.dumps(driver.records_to_json(runs), indent=1))
    _write(out / "config.json", json.dumps(cfg.to_json(), indent=1))
    (out / "losses").mkdir(exist_ok=True)
    for r in records:
        write_loss_records(out / "losses" / f"iter_{r.iteration:03d}.csv", r.train_report.records)
    art["model"].save(out / "model.json")
    data = art["data"]
    save_trajectories(out / "trajectories.jsonl", [*data.d_pos, *data.d_neg, *data.d_agent])
    batch = encode(data, cfg.split_mode, cfg.train.beta, extra_agent=False)
    _write(out / "orderings.json", json.dumps([o.to_json() for o in batch.orderings]))
    print(f"final ground-truth return {records[-1].gt_return:.1f}; wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    base = _config(args.config)
    configs = driver.mixture_configs(base) if args.mixtures else [base]
    seeds = _seeds(args.seeds) if args.seeds else None
    res = driver.sweep(configs, seeds)
    out = Path(args.out)
    _write(out / "iterations.csv", driver.to_csv(res.iteration_rows(), driver.ITERATION_FIELDS))
    _write(out / "summary.csv", driver.to_csv(res.summary, driver.SUMMARY_FIELDS))
    _write(out / "records.json", json.dumps(driver.records_to_json(res.runs), indent=1))
    for row in res.summary:
        if row["iteration"] == max(r["iteration"] for r in res.summary if r["config_id"] == row["config_id"]):
            print(f"{row['config_id']}: final mean {float(row['mean']):.1f} (stderr {float(row['stderr']):.1f}, "
                  f"{row['n_kept']} kept, {row['n_outliers']} outliers)")
    return 0


def cmd_verify(args) -> int:
    report = verify_all(np.random.default_rng(args.seed), args.corrupt_bound, args.quick)
    text = json.dumps(report, indent=1)
    if args.out:
        _write(Path(args.out), text)
    print(text)
    return 0 if report["passed"] else 1


def cmd_export(args) -> int:
    if args.default_config:
        text = json.dumps(driver.ExperimentConfig().to_json(), indent=1)
    else:
        runs = driver.records_from_json(json.loads(Path(args.records).read_text()))
        if args.table == "summary":
            rows = []
            for cid in dict.fromkeys(c for c, _ in runs):
                rows.extend(driver.summarize(cid, {s: r for (c, s), r in runs.items() if c == cid}))
            fields = driver.SUMMARY_FIELDS
        else:
            rows = driver.SweepResult(runs, []).iteration_rows()
            fields = driver.ITERATION_FIELDS
        text = json.dumps(rows, indent=1) if args.format == "json" else driver.to_csv(rows, fields)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leopard", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="one LEOPARD run")
    t.add_argument("--config", help="experiment config JSON (defaults if omitted)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default="runs/train")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="configs x seeds with outlier-filtered summaries")
    s.add_argument("--config")
    s.add_argument("--seeds", help="e.g. 0-15 or 0,2,5 (defaults to the config's seeds)")
    s.add_argument("--mixtures", action="store_true", help="sweep the five feedback mixtures")
    s.add_argument("--out", default="runs/sweep")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="property checks; exit status 1 if any fails")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--quick", action="store_true", help="fewer instances per check")
    v.add_argument("--corrupt-bound", type=float, default=0.0, help=argparse.SUPPRESS)
    v.add_argument("--out", help="also write the JSON report here")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export", help="records JSON to CSV/JSON tables, or dump the default config")
    e.add_argument("--records", help="records.json from train or sweep")
    e.add_argument("--table", choices=("iterations", "summary"), default="iterations")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--default-config", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "export" and not (args.default_config or args.records):
        build_parser().error("export needs --records or --default-config")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
