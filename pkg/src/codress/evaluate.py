"""Evaluation protocols: success rates, force statistics, action-scale sweeps.

Evaluation always runs the deterministic policy mean over a fixed block of
episode seeds, so comparisons across checkpoints, action scales or ablations
are paired by seed.  Rows serialize to a versioned CSV that an independent
reader can re-aggregate to the emitted summary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rollout import EVAL_DOMAIN, RolloutCollector

METRICS_SCHEMA = "codress.metrics.v1"
METRICS_COLUMNS = ("run_id", "phase", "episode", "seed", "success",
                   "time_to_success_s", "max_force_N", "mean_deformation",
                   "final_progress")
FORCE_THRESHOLD_N = 50.0


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    phase: str
    episode: int
    seed: int
    success: int
    time_to_success_s: float | None
    max_force_N: float
    mean_deformation: float
    final_progress: float


def evaluate(collector: RolloutCollector, params, n_episodes: int,
             eval_seed: int, run_id: str = "eval", phase: str = "",
             action_scale=None, episode_steps=None):
    """Run the deterministic-mean policy on seeds eval_seed..eval_seed+n-1."""
    episodes = collector.collect(params, n_episodes, eval_seed, EVAL_DOMAIN,
                                 0, stochastic=False,
                                 action_scale=action_scale, record=False,
                                 episode_steps=episode_steps)
    rows = []
    for e in episodes:
        r = e.result
        rows.append(MetricsRow(run_id, phase, e.index, eval_seed + e.index,
                               int(r.success), r.time_to_success,
                               r.max_force, r.mean_deformation,
                               r.final_progress))
    return rows, summarize(rows)


def summarize(rows) -> dict:
    """Aggregate statistics matching the reported evaluation protocol."""
    n = len(rows)
    succ = [r for r in rows if r.success]
    t2s = [r.time_to_success_s for r in succ]
    forces = np.array([r.max_force_N for r in rows]) if rows else np.zeros(0)
    return {
        "episodes": n,
        "success_rate": len(succ) / n if n else 0.0,
        "mean_time_to_success_s": float(np.mean(t2s)) if t2s else None,
        "force_p50_N": float(np.percentile(forces, 50)) if n else 0.0,
        "force_p95_N": float(np.percentile(forces, 95)) if n else 0.0,
        "force_max_N": float(forces.max()) if n else 0.0,
        "pct_below_50N": float(np.mean(forces < FORCE_THRESHOLD_N)) if n else 0.0,
        "mean_final_progress": float(np.mean([r.final_progress for r in rows]))
        if n else 0.0,
    }


def write_metrics_csv(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# schema: {METRICS_SCHEMA}\n")
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for r in rows:
            t = "" if r.time_to_success_s is None else repr(r.time_to_success_s)
            writer.writerow([r.run_id, r.phase, r.episode, r.seed, r.success,
                             t, repr(r.max_force_N), repr(r.mean_deformation),
                             repr(r.final_progress)])
    return path


def read_metrics_csv(path):
    rows = []
    with open(path, newline="") as f:
        first = f.readline().strip()
        if first != f"# schema: {METRICS_SCHEMA}":
            raise ValueError(f"unexpected metrics schema line: {first!r}")
        for rec in csv.DictReader(f):
            rows.append(MetricsRow(
                rec["run_id"], rec["phase"], int(rec["episode"]),
                int(rec["seed"]), int(rec["success"]),
                None if rec["time_to_success_s"] == ""
                else float(rec["time_to_success_s"]),
                float(rec["max_force_N"]), float(rec["mean_deformation"]),
                float(rec["final_progress"])))
    return rows


def spearman(xs, ys) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    def ranks(v):
        v = np.asarray(v, dtype=float)
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        for u in np.unique(v):
            m = v == u
            if m.sum() > 1:
                r[m] = r[m].mean()
        return r
    rx, ry = ranks(xs), ranks(ys)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom) if denom > 0 else 0.0


def sweep_action_scale(collector: RolloutCollector, params, scales,
                       n_episodes: int, eval_seed: int, run_id: str = "sweep",
                       episode_steps=None):
    """Evaluate the same seed block under each action scale.

    Returns (rows, per-scale summaries, trend report with the Spearman
    correlation between scale and mean time to success).
    """
    all_rows = []
    summaries = {}
    for scale in scales:
        rows, summary = evaluate(collector, params, n_episodes, eval_seed,
                                 run_id, phase=f"scale={scale}",
                                 action_scale=scale,
                                 episode_steps=episode_steps)
        all_rows.extend(rows)
        summaries[scale] = summary
    valid = [(s, summaries[s]["mean_time_to_success_s"]) for s in scales
             if summaries[s]["mean_time_to_success_s"] is not None]
    trend = {
        "scales": list(scales),
        "spearman_scale_vs_time": spearman([v[0] for v in valid],
                                           [v[1] for v in valid])
        if len(valid) >= 2 else None,
    }
    return all_rows, summaries, trend
