import csv
import hashlib
import json

import pytest

from contingency import cli
from contingency.config import parse_config
from contingency.runner import TRACE_COLUMNS, TRAJECTORY_COLUMNS, RunError, fmt, run


def cfg(doc):
    return parse_config(json.dumps(doc))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def manifest(directory):
    return json.loads((directory / "manifest.json").read_text())["files"]


def test_fmt():
    assert fmt(0.1) == "0.1" and float(fmt(1 / 3)) == 1 / 3
    assert fmt(True) == "1" and fmt(None) == "" and fmt(7) == "7"


def test_urn_bundle(tmp_path):
    b = run(cfg({"mode": "urn", "master_seed": 42, "urn": {"steps": 1000}}), tmp_path)
    rows = read_csv(tmp_path / "trajectories.csv")
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == 1 + 1000
    assert b.summary["metrics"]["martingale_residual"] is None
    assert set(b.files) == {"effective_config.json", "metrics.json", "trajectories.csv",
                            "manifest.json"}


def test_urn_decimated(tmp_path):
    run(cfg({"mode": "urn", "n_runs": 2, "decimation": 7, "urn": {"steps": 1000}}), tmp_path)
    rows = read_csv(tmp_path / "trajectories.csv")[1:]
    assert len(rows) == 2 * 143
    assert [r[1] for r in rows[:2]] == ["7", "14"] and rows[142][1] == "1000"
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert set(metrics) >= {"ks_uniform", "martingale_residual"}


def test_market_bundle(tmp_path):
    doc = {"mode": "market", "master_seed": 5,
           "market": {"n_items": 10, "n_agents": 100, "n_worlds": 8}}
    run(cfg(doc), tmp_path)
    traces = sorted(p.name for p in (tmp_path / "traces").iterdir())
    assert len(traces) == 24
    rows = read_csv(tmp_path / "traces" / "strong_world007.csv")
    assert tuple(rows[0]) == TRACE_COLUMNS and len(rows) == 101
    assert rows[1][:3] == ["strong", "7", "1"]
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert set(metrics) == {"independent", "weak", "strong"}
    assert set(metrics["weak"]) == {"gini_mean", "unpredictability_U", "ex_ante_spearman",
                                    "rigidity", "prediction_curve"}
    assert set(metrics["weak"]["prediction_curve"][0]) == {"f", "accuracy", "n"}


def test_sweep_bundle(tmp_path):
    doc = {"mode": "sweep", "sweep": {"parameter": "beta", "values": [0, 1]},
           "market": {"n_items": 6, "n_agents": 150, "n_worlds": 2, "conditions": ["strong"]}}
    b = run(cfg(doc), tmp_path)
    assert [p["value"] for p in b.summary["metrics"]["points"]] == [0.0, 1.0]
    assert len(read_csv(tmp_path / "sweep.csv")) == 3


def test_inject_bundle(tmp_path):
    doc = {"mode": "inject", "n_runs": 6, "master_seed": 3,
           "market": {"n_items": 10, "n_agents": 200},
           "puppets": {"k": 20, "threshold": 30}}
    b = run(cfg(doc), tmp_path)
    m = b.summary["metrics"]
    assert m["delta"] == m["treated"] - m["baseline"]
    assert m["detection"]["recall"] == 1.0
    rows = read_csv(tmp_path / "detections.csv")
    assert rows[0] == ["run_id", "arm", "item_id", "window_start", "window_end", "surprise"]
    assert any(r[1] == "treated" and int(r[2]) == m["target_item"] for r in rows[1:])


def test_manifest_digests_and_rerun(tmp_path):
    doc = {"mode": "market", "market": {"n_items": 5, "n_agents": 50, "n_worlds": 2}}
    run(cfg(doc), tmp_path)
    first = manifest(tmp_path)
    written = {str(p.relative_to(tmp_path)) for p in tmp_path.rglob("*") if p.is_file()}
    assert written == {e["path"] for e in first} | {"manifest.json"}
    for e in first:
        assert hashlib.sha256((tmp_path / e["path"]).read_bytes()).hexdigest() == e["sha256"]
    run(cfg(doc), tmp_path)
    assert manifest(tmp_path) == first


def test_rerun_with_fewer_outputs_removes_stale_files(tmp_path):
    run(cfg({"mode": "market", "market": {"n_items": 5, "n_agents": 50, "n_worlds": 3}}),
        tmp_path)
    run(cfg({"mode": "market", "market": {"n_items": 5, "n_agents": 50, "n_worlds": 2}}),
        tmp_path)
    assert len(list((tmp_path / "traces").iterdir())) == 6


def test_echoed_config_reparses(tmp_path):
    c = cfg({"mode": "urn", "urn": {"steps": 20}})
    run(c, tmp_path)
    assert parse_config((tmp_path / "effective_config.json").read_text()) == c


def test_failure_removes_partial_outputs(tmp_path, monkeypatch):
    import contingency.runner as runner

    def boom(*args, **kwargs):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(runner, "market_report", boom)
    with pytest.raises(RuntimeError):
        run(cfg({"mode": "market", "market": {"n_items": 5, "n_agents": 50, "n_worlds": 2}}),
            tmp_path)
    assert [p for p in tmp_path.rglob("*") if p.is_file()] == []


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(RunError):
        run(cfg({"mode": "urn", "urn": {"steps": 5}}), blocker / "out")


class TestCli:
    def write(self, tmp_path, doc):
        p = tmp_path / "config.json"
        p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
        return str(p)

    def test_success(self, tmp_path, capsys):
        path = self.write(tmp_path, {"mode": "urn", "n_runs": 3, "urn": {"steps": 50}})
        assert cli.main([path, "--out", str(tmp_path / "o"), "--seed", "9"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["mode"] == "urn" and "ks_uniform" in summary["metrics"]
        echoed = json.loads((tmp_path / "o" / "effective_config.json").read_text())
        assert echoed["master_seed"] == 9

    def test_config_error(self, tmp_path, capsys):
        path = self.write(tmp_path, {"mode": "urn", "urn": {"gamma": -0.5}})
        assert cli.main([path]) == 2
        assert "gamma" in capsys.readouterr().err

    def test_syntax_error(self, tmp_path, capsys):
        assert cli.main([self.write(tmp_path, "{oops")]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_bad_seed_and_threads(self, tmp_path):
        path = self.write(tmp_path, {"mode": "urn"})
        assert cli.main([path, "--seed", "-1"]) == 2
        assert cli.main([path, "--threads", "0"]) == 2

    def test_runtime_error(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        path = self.write(tmp_path, {"mode": "urn", "urn": {"steps": 5}})
        assert cli.main([path, "--out", str(blocker / "o")]) == 3
        assert "runtime error" in capsys.readouterr().err
