"""Run an experiment config and write its output bundle.

Every bundle holds ``effective_config.json`` (the parsed config with defaults
filled in), mode-specific CSV/JSON files and ``manifest.json`` listing each
file with its SHA-256.  Outputs depend only on the config: work is split into
units that each own a seed stream, and results are assembled in index order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .config import ExperimentConfig, _sweep_value
from .intervention import PuppetSchedule, detect_bursts, score_detection
from .market import InfluenceCondition, draw_appeals, run_world_set, simulate_worlds, world_seed
from .observers import ks_uniform_statistic, market_report
from .urn import ensemble_paths

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("run_id", "step", "share_color0")
TRACE_COLUMNS = ("condition", "world_id", "step", "agent_id", "item_id", "signal_shown",
                 "rating", "downloaded", "is_puppet")
DETECTION_COLUMNS = ("run_id", "arm", "item_id", "window_start", "window_end", "surprise")


class RunError(RuntimeError):
    """A run failed after the config was accepted."""


def fmt(value) -> str:
    """Shortest round-trip text for CSV cells."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k.value if isinstance(k, InfluenceCondition) else k): _clean(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class OutputBundle:
    directory: Path
    files: dict = field(default_factory=dict)  # relative path -> sha256
    summary: dict = field(default_factory=dict)


class _Writer:
    def __init__(self, directory: Path):
        self.directory = directory
        self.digests: dict[str, str] = {}

    def text(self, name: str, content: str) -> None:
        path = self.directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        data = content.encode("utf-8")
        try:
            path.write_bytes(data)
        except OSError as exc:
            raise RunError(f"cannot write {path}: {exc.strerror}") from exc
        self.digests[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.text(name, buf.getvalue())

    def manifest(self) -> None:
        entries = [{"path": k, "sha256": v} for k, v in sorted(self.digests.items())]
        self.text("manifest.json", dumps({"files": entries}))

    def remove_all(self) -> None:
        for name in self.digests:
            try:
                (self.directory / name).unlink()
            except OSError:
                pass


def _remove_previous(directory: Path) -> None:
    manifest = directory / "manifest.json"
    if not manifest.exists():
        return
    try:
        entries = json.loads(manifest.read_text())["files"]
    except (OSError, ValueError, KeyError):
        return
    for e in entries + [{"path": "manifest.json"}]:
        p = directory / e["path"]
        if p.is_file():
            p.unlink()


def _split(n: int, n_jobs: int) -> list[tuple[int, int]]:
    n_jobs = max(1, min(n_jobs, n))
    bounds = np.linspace(0, n, n_jobs + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_urn(cfg: ExperimentConfig, out: _Writer, n_jobs: int) -> dict:
    p = cfg.urn
    parts = Parallel(n_jobs=n_jobs)(
        delayed(ensemble_paths)(p.state, p.rule, p.steps, b - a, cfg.master_seed, a)
        for a, b in _split(cfg.n_runs, n_jobs))
    paths = np.concatenate(parts)
    steps = np.arange(1, p.steps + 1)
    keep = steps % cfg.decimation == 0
    keep[-1] = True
    rows = ((fmt(r), fmt(int(s)), fmt(v)) for r in range(cfg.n_runs)
            for s, v in zip(steps[keep], paths[r, keep]))
    out.csv("trajectories.csv", TRAJECTORY_COLUMNS, rows)
    finals = paths[:, -1]
    initial = p.state.share
    metrics = {
        "ks_uniform": ks_uniform_statistic(finals),
        "martingale_residual": abs(float(np.mean(finals)) - initial) if cfg.n_runs >= 2 else None,
        "final_share_mean": float(np.mean(finals)),
        "initial_share": initial,
        "n_runs": cfg.n_runs,
    }
    out.text("metrics.json", dumps(metrics))
    return metrics


def _trace_rows(trace):
    cond = trace.condition.value
    for step, agent, item, sig, rating, dl, puppet in zip(
            trace.steps.tolist(), trace.agent_id.tolist(), trace.item_id.tolist(),
            trace.signal_shown.tolist(), trace.rating.tolist(), trace.downloaded.tolist(),
            trace.is_puppet.tolist()):
        yield (cond, fmt(trace.world_id), fmt(step), fmt(agent), fmt(item), fmt(sig),
               fmt(rating), fmt(dl), fmt(puppet))


def _run_market(cfg: ExperimentConfig, out: _Writer, n_jobs: int) -> dict:
    mp = cfg.market
    market = mp.to_market()
    worlds = run_world_set(market, cfg.master_seed, n_jobs,
                           require_replicates=mp.unpredictability)
    for cond in market.conditions:
        for trace in worlds.worlds(cond):
            out.csv(f"traces/{cond.value}_world{trace.world_id:03d}.csv", TRACE_COLUMNS,
                    _trace_rows(trace))
    out.csv("appeals.csv", ("item_id", "appeal"),
            ((fmt(i), fmt(a)) for i, a in enumerate(worlds.appeals.tolist())))
    metrics = market_report(worlds, mp.fractions, mp.n_bins).to_dict()
    out.text("metrics.json", dumps(metrics))
    return metrics


def _run_sweep(cfg: ExperimentConfig, out: _Writer, n_jobs: int) -> dict:
    mp, sw = cfg.market, cfg.sweep
    points = []
    for value in sw.values:
        market = mp.to_market(**{sw.parameter: _sweep_value(sw.parameter, value)})
        worlds = run_world_set(market, cfg.master_seed, n_jobs,
                               require_replicates=mp.unpredictability)
        points.append({"value": value,
                       "metrics": market_report(worlds, mp.fractions, mp.n_bins).to_dict()})
    metrics = {"parameter": sw.parameter, "points": points}
    out.text("metrics.json", dumps(metrics))
    rows = []
    for pt in points:
        for cond, m in pt["metrics"].items():
            rows.append((fmt(pt["value"]), cond, fmt(m["gini_mean"]),
                         fmt(m["unpredictability_U"]), fmt(m["ex_ante_spearman"]),
                         fmt(m["rigidity"])))
    out.csv("sweep.csv", (sw.parameter, "condition", "gini_mean", "unpredictability_U",
                          "ex_ante_spearman", "rigidity"), rows)
    return metrics


def _run_inject(cfg: ExperimentConfig, out: _Writer, n_jobs: int) -> dict:
    pp = cfg.puppets
    market = cfg.market.to_market()
    appeals = draw_appeals(market, cfg.master_seed)
    target = int(np.argmin(appeals)) if pp.target == "lowest_appeal" else pp.target
    schedule = PuppetSchedule(target, pp.schedule_steps)
    chunks = _split(cfg.n_runs, n_jobs)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_paired_chunk)(market, schedule, a, b, cfg.master_seed, pp.condition, appeals)
        for a, b in chunks)
    baseline = [t for part in parts for t in part[0]]
    treated = [t for part in parts for t in part[1]]
    p0 = sum(t.top_item == target for t in baseline) / cfg.n_runs
    p1 = sum(t.top_item == target for t in treated) / cfg.n_runs
    rows = []
    for run_id, (b, t) in enumerate(zip(baseline, treated)):
        for arm, trace in (("baseline", b), ("treated", t)):
            for f in detect_bursts(trace, pp.window, pp.threshold).flagged:
                rows.append((fmt(run_id), arm, fmt(f.item), fmt(f.start), fmt(f.end),
                             fmt(f.surprise)))
    out.csv("detections.csv", DETECTION_COLUMNS, rows)
    score = score_detection(baseline, treated, schedule, pp.window, pp.threshold)
    metrics = {
        "condition": pp.condition.value,
        "target_item": target,
        "k": schedule.k,
        "n_runs": cfg.n_runs,
        "baseline": p0,
        "treated": p1,
        "delta": p1 - p0,
        "detection": {"window": pp.window, "threshold": pp.threshold,
                      "recall": score.recall, "false_flag_rate": score.false_flag_rate},
    }
    out.text("metrics.json", dumps(metrics))
    return metrics


def _paired_chunk(market, schedule, a, b, master_seed, condition, appeals):
    seeds = [world_seed(master_seed, r) for r in range(a, b)]
    ids = list(range(a, b))
    return (simulate_worlds(market, condition, seeds, appeals, None, ids),
            simulate_worlds(market, condition, seeds, appeals, schedule, ids))


_MODES = {"urn": _run_urn, "market": _run_market, "sweep": _run_sweep, "inject": _run_inject}


def run(cfg: ExperimentConfig, out_dir: Optional[os.PathLike] = None,
        n_jobs: int = 1) -> OutputBundle:
    directory = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        _remove_previous(directory)
    except OSError as exc:
        raise RunError(f"cannot prepare output directory {directory}: {exc.strerror}") from exc
    out = _Writer(directory)
    try:
        out.text("effective_config.json", cfg.to_json())
        metrics = _MODES[cfg.mode](cfg, out, n_jobs)
        out.manifest()
    except BaseException:
        out.remove_all()
        raise
    log.info("wrote %d files to %s", len(out.digests), directory)
    files = dict(out.digests)
    summary = {"mode": cfg.mode, "output_dir": str(directory),
               "files": len(files), "metrics": _clean(metrics)}
    return OutputBundle(directory, files, summary)
