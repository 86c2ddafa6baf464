"""Two-phase training driver: explore with a weak force penalty, then refine
from the phase-1 checkpoint with the strengthened (linear) penalty.

Each iteration collects full episodes until the sample budget is met, fits
generalized advantages against the shared value baseline, takes one joint
trust-region step, and regresses the value net.  Everything is deterministic
given (config, seed) and independent of the worker count.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import apply_checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError
from .evaluate import FORCE_THRESHOLD_N, evaluate
from .nets import ValueNet
from .reward import RewardWeights
from .rollout import (EnvSpec, INIT_DOMAIN, RolloutBatch, RolloutCollector,
                      TRAIN_DOMAIN, build_policy)
from .sensors import schema_document
from .trpo import TrpoConfig, compute_gae, fit_value, trpo_update

TRAINLOG_SCHEMA = "codress.trainlog.v1"
TRAINLOG_COLUMNS = ("phase", "iteration", "episodes", "mean_return",
                    "success_rate", "mean_fmax", "p90_fmax", "pct_below_50N",
                    "kl", "improvement", "backtracks", "wall_s")


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    iterations: int
    weights: RewardWeights
    penalty_form: str = "eq2"  # eq2 | linear
    force_ref: float = 50.0
    checkpoint_every: int = 50
    stop_success: float | None = None  # stop early when the trailing mean
                                       # training success reaches this level

    def __post_init__(self):
        if self.penalty_form not in ("eq2", "linear"):
            raise ConfigError(f"unknown penalty form {self.penalty_form!r}")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")


class TrainingLog:
    """Append-only per-iteration rows; one row per iteration, no gaps."""

    def __init__(self):
        self.rows = []

    def append(self, **kw):
        self.rows.append({c: kw.get(c) for c in TRAINLOG_COLUMNS})

    def column(self, name):
        return [r[name] for r in self.rows]

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(f"# schema: {TRAINLOG_SCHEMA}\n")
            w = csv.writer(f)
            w.writerow(TRAINLOG_COLUMNS)
            for r in self.rows:
                w.writerow([r[c] for c in TRAINLOG_COLUMNS])
        return path


def episodes_per_iteration(samples: int, horizon: int) -> int:
    """Full episodes only; the sample budget is a minimum."""
    return max(1, -(-samples // horizon))


def schema_hash_for(env_spec: EnvSpec) -> str:
    env = env_spec.build()
    doc = schema_document(env.human_obs, env.robot_obs,
                          env.human.chain.n_joints, env.robot.chain.n_joints,
                          env_spec.flags)
    return doc["hash"]


def run_phase(env_spec: EnvSpec, phase: PhaseSpec, trpo_cfg: TrpoConfig,
              seed: int, out_dir, workers: int = 1, policy=None,
              value_net=None, init_checkpoint=None, iteration_offset: int = 0,
              log: TrainingLog | None = None, quiet: bool = False):
    """Train one curriculum phase.

    The environment reward is rebuilt from the phase spec.  ``policy`` and
    ``value_net`` continue in place when given (phase chaining); otherwise
    they are freshly initialized from the seed or loaded from
    ``init_checkpoint``.  Returns (checkpoint path, TrainingLog, policy,
    value_net).
    """
    spec = replace(env_spec, weights=phase.weights,
                   penalty_form=phase.penalty_form,
                   force_ref=phase.force_ref)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = log if log is not None else TrainingLog()
    schema_hash = schema_hash_for(spec)

    with RolloutCollector(spec, workers,
                          log_std_init=trpo_cfg.log_std_init) as collector:
        env = collector.env
        if policy is None:
            policy = build_policy(env, seed,
                                  log_std_init=trpo_cfg.log_std_init)
            value_net = ValueNet(
                env.obs_dim,
                rng=np.random.default_rng(
                    np.random.SeedSequence((seed, INIT_DOMAIN, 1))),
                target_scale=trpo_cfg.value_scale)
            if init_checkpoint is not None:
                arrays, _ = load_checkpoint(init_checkpoint, schema_hash)
                apply_checkpoint(arrays, policy, value_net)
        n_ep = episodes_per_iteration(trpo_cfg.samples_per_iteration,
                                      env.cfg.episode_steps)
        horizon = env.cfg.episode_steps

        for it in range(phase.iterations):
            t0 = time.perf_counter()
            global_it = iteration_offset + it
            episodes = collector.collect(policy.get_params(), n_ep, seed,
                                         TRAIN_DOMAIN, global_it)
            batch = RolloutBatch.from_episodes(episodes)
            values = value_net.predict(batch.obs)
            bootstrap = value_net.predict(batch.final_obs)
            adv, vtarg = compute_gae(batch.rew, values, bootstrap,
                                     batch.ep_start, trpo_cfg.gamma,
                                     trpo_cfg.gae_lambda)
            diag = trpo_update(policy, batch.obs, batch.act, batch.logp, adv,
                               trpo_cfg)
            fit_value(value_net, batch.obs, vtarg, trpo_cfg)

            results = batch.results
            forces = np.array([r.max_force for r in results])
            row = dict(
                phase=phase.name, iteration=global_it, episodes=len(results),
                mean_return=float(np.mean([r.episode_return for r in results])),
                success_rate=float(np.mean([r.success for r in results])),
                mean_fmax=float(forces.mean()),
                p90_fmax=float(np.percentile(forces, 90)),
                pct_below_50N=float(np.mean(forces < FORCE_THRESHOLD_N)),
                kl=diag["kl"], improvement=diag["improvement"],
                backtracks=diag["backtracks"],
                wall_s=time.perf_counter() - t0)
            log.append(**row)
            if not quiet:
                print(f"[{phase.name}] it {global_it:4d} "
                      f"return {row['mean_return']:9.1f} "
                      f"succ {row['success_rate']:.2f} "
                      f"fmax {row['mean_fmax']:6.1f} kl {diag['kl']:.4f}",
                      flush=True)
            if phase.checkpoint_every and (it + 1) % phase.checkpoint_every == 0 \
                    and (it + 1) < phase.iterations:
                save_checkpoint(out_dir / f"{phase.name}-it{global_it:05d}.ckpt",
                                policy, value_net, schema_hash,
                                {"phase": phase.name, "iteration": global_it})
            if phase.stop_success is not None and it >= 4:
                recent = [r["success_rate"] for r in log.rows[-5:]
                          if r["phase"] == phase.name]
                if len(recent) == 5 and float(np.mean(recent)) >= phase.stop_success:
                    break

        final = save_checkpoint(
            out_dir / f"{phase.name}-final.ckpt", policy, value_net,
            schema_hash,
            {"phase": phase.name,
             "iteration": iteration_offset + phase.iterations - 1})
    return final, log, policy, value_net


def run_curriculum(env_spec: EnvSpec, phases, trpo_cfg: TrpoConfig, seed: int,
                   out_dir, workers: int = 1, eval_episodes: int = 0,
                   eval_seed: int = 0, quiet: bool = False):
    """Execute phases sequentially, threading the checkpoint.

    When ``eval_episodes`` > 0, each phase is followed by a deterministic
    evaluation so force statistics can be compared before/after refinement.
    Returns (final checkpoint path, TrainingLog, per-phase summaries).
    """
    out_dir = Path(out_dir)
    log = TrainingLog()
    policy = value_net = None
    offset = 0
    summaries = {}
    final = None
    for phase in phases:
        final, log, policy, value_net = run_phase(
            env_spec, phase, trpo_cfg, seed, out_dir, workers, policy,
            value_net, iteration_offset=offset, log=log, quiet=quiet)
        offset += phase.iterations
        if eval_episodes > 0:
            spec = replace(env_spec, weights=phase.weights,
                           penalty_form=phase.penalty_form,
                           force_ref=phase.force_ref)
            with RolloutCollector(spec, workers) as collector:
                _, summary = evaluate(collector, policy.get_params(),
                                      eval_episodes, eval_seed,
                                      phase=phase.name)
            summaries[phase.name] = summary
            if not quiet:
                print(f"[{phase.name}] eval: success "
                      f"{summary['success_rate']:.2f}, <50N "
                      f"{summary['pct_below_50N']:.2f}", flush=True)
    log.write_csv(out_dir / "training_log.csv")
    return final, log, summaries
