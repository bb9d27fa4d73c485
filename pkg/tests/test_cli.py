import csv
import json
import os
import subprocess
import sys

import pytest

from leopard.cli import _seeds, main
from leopard.driver import ExperimentConfig

TINY = ExperimentConfig(
    horizon=16, fragment_len=8, n_iters=2, n_rollout_steps=3 * 16 * 4, n_prefs=4,
    demo_train_episodes=50, hidden=[8], seeds=[0, 1],
)


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY.to_json()))
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_seed_ranges():
    assert _seeds("0-3") == [0, 1, 2, 3]
    assert _seeds("1,4,6-7") == [1, 4, 6, 7]


def test_train_outputs(tmp_path, cfg_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--seed", "3", "--out", str(out)]) == 0
    rows = read_csv(out / "iterations.csv")
    assert list(rows[0]) == ["run_id", "seed", "iteration", "gt_return", "rm_steps", "rm_loss", "outlier_flag"]
    assert [r["iteration"] for r in rows] == ["0", "1"] and rows[0]["seed"] == "3"
    assert sorted(p.name for p in (out / "losses").iterdir()) == ["iter_000.csv", "iter_001.csv"]
    orderings = json.loads((out / "orderings.json").read_text())
    assert orderings and set(orderings[0]) >= {"beta", "items", "edges"}
    assert json.loads((out / "model.json").read_text())
    lines = (out / "trajectories.jsonl").read_text().splitlines()
    assert len(lines) == 2 + 4 + 4  # two demos, then 64-step batches of random and agent episodes
    assert ExperimentConfig.load(out / "config.json") == TINY


def test_sweep_and_export(tmp_path, cfg_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg_path), "--seeds", "0-1", "--out", str(out)]) == 0
    summary = read_csv(out / "summary.csv")
    assert len(summary) == 2 and {"config_id", "mean", "stderr", "n_kept", "n_outliers"} <= set(summary[0])
    assert len(read_csv(out / "iterations.csv")) == 4
    exported = tmp_path / "s.csv"
    assert main(["export", "--records", str(out / "records.json"), "--table", "summary", "--out", str(exported)]) == 0
    assert exported.read_text() == (out / "summary.csv").read_text()
    as_json = tmp_path / "i.json"
    main(["export", "--records", str(out / "records.json"), "--format", "json", "--out", str(as_json)])
    assert len(json.loads(as_json.read_text())) == 4


def test_sweep_byte_identical(tmp_path, cfg_path):
    for name in ("a", "b"):
        main(["sweep", "--config", str(cfg_path), "--seeds", "0,1", "--out", str(tmp_path / name)])
    for f in ("iterations.csv", "summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_export_default_config(tmp_path):
    p = tmp_path / "d.json"
    main(["export", "--default-config", "--out", str(p)])
    assert ExperimentConfig.load(p) == ExperimentConfig()


def test_export_needs_input():
    with pytest.raises(SystemExit):
        main(["export"])


class TestVerifyExitCode:
    def test_pass(self, tmp_path, capsys):
        assert main(["verify", "--quick", "--out", str(tmp_path / "v.json")]) == 0
        report = json.loads((tmp_path / "v.json").read_text())
        assert report["passed"] and all(c["passed"] for c in report["checks"])

    def test_corrupted_bound_fails(self, capsys):
        assert main(["verify", "--quick", "--corrupt-bound", "5.0"]) == 1
        report = json.loads(capsys.readouterr().out)
        assert not report["passed"]

    def test_module_entry_point(self, tmp_path):
        env = dict(os.environ)
        res = subprocess.run([sys.executable, "-m", "leopard", "verify", "--quick", "--corrupt-bound", "5.0"],
                             capture_output=True, text=True, env=env)
        assert res.returncode == 1 and json.loads(res.stdout)["passed"] is False
