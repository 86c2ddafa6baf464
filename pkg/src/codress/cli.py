"""Command-line interface.

Subcommands: train, curriculum, eval, sweep-action-scale, schema.
Exit codes: 0 success, 2 configuration error, 3 checkpoint error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .checkpoint import apply_checkpoint, load_checkpoint
from .config import load_experiment, write_resolved
from .curriculum import run_curriculum, schema_hash_for
from .errors import CheckpointError, ConfigError, NumericError
from .evaluate import (evaluate, sweep_action_scale, summarize,
                       write_metrics_csv)
from .nets import ValueNet
from .rollout import EnvSpec, RolloutCollector, build_policy
from .sensors import AblationFlags, schema_document


def _parser():
    p = argparse.ArgumentParser(prog="codress",
                                description="co-optimized assisted dressing "
                                            "at desk scale")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", required=True, help="experiment YAML")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None)
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)
            sp.add_argument("--episodes", type=int, default=None)
            sp.add_argument("--ablate", action="append", default=[],
                            choices=["capacitive", "jointpos"])

    sp = sub.add_parser("train", help="run the configured training phases")
    common(sp)
    sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("curriculum",
                        help="train all phases and compare per-phase force "
                             "statistics")
    common(sp)
    sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp, checkpoint=True)
    sp.add_argument("--action-scale", type=float, default=None)

    sp = sub.add_parser("sweep-action-scale",
                        help="evaluate one checkpoint across action scales")
    common(sp, checkpoint=True)
    sp.add_argument("--scales", type=float, nargs="+",
                    default=[1.0, 0.8, 0.6, 0.4, 0.2])

    sp = sub.add_parser("schema",
                        help="print the observation/action schema document")
    sp.add_argument("--config", required=True)
    sp.add_argument("--ablate", action="append", default=[],
                    choices=["capacitive", "jointpos"])
    return p


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "out", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def _flags(cfg, args) -> AblationFlags:
    names = set(getattr(args, "ablate", []) or [])
    if not names:
        return cfg.ablation
    return AblationFlags(
        drop_capacitive="capacitive" in names or cfg.ablation.drop_capacitive,
        drop_human_joint_positions="jointpos" in names
        or cfg.ablation.drop_human_joint_positions)


def _env_spec(cfg, flags=None) -> EnvSpec:
    weights = cfg.phases[0].weights if cfg.phases else None
    if weights is None:
        raise ConfigError("config defines no phases")
    return EnvSpec(cfg.task, weights, flags=flags or cfg.ablation)


def _load_policy(cfg, spec, checkpoint_path):
    schema = schema_hash_for(spec)
    arrays, manifest = load_checkpoint(checkpoint_path, schema)
    env = spec.build()
    policy = build_policy(env, cfg.seed)
    value = ValueNet(env.obs_dim,
                     target_scale=manifest.get("value_target_scale", 1e-3))
    apply_checkpoint(arrays, policy, value)
    return policy, value


def _cmd_train(args, compare_phases):
    cfg, tree = load_experiment(args.config, _overrides(args))
    out = Path(cfg.out)
    write_resolved(tree, out)
    spec = _env_spec(cfg)
    final, log, summaries = run_curriculum(
        spec, cfg.phases, cfg.trpo, cfg.seed, out, cfg.workers,
        eval_episodes=cfg.eval_episodes if compare_phases else 0,
        eval_seed=cfg.eval_seed, quiet=args.quiet)
    print(f"final checkpoint: {final}")
    if compare_phases and summaries:
        print(json.dumps({k: v for k, v in summaries.items()}, indent=2))
        with open(out / "phase-summaries.json", "w") as f:
            json.dump(summaries, f, indent=2, sort_keys=True)
    return 0


def _cmd_eval(args):
    cfg, tree = load_experiment(args.config, _overrides(args))
    flags = _flags(cfg, args)
    spec = _env_spec(cfg, flags)
    policy, _ = _load_policy(cfg, spec, args.checkpoint)
    episodes = args.episodes or cfg.eval_episodes
    out = Path(cfg.out)
    write_resolved(tree, out)
    with RolloutCollector(spec, cfg.workers) as collector:
        rows, summary = evaluate(collector, policy.get_params(), episodes,
                                 cfg.eval_seed, run_id=Path(args.checkpoint).stem,
                                 action_scale=args.action_scale,
                                 episode_steps=cfg.eval_episode_steps)
    csv_path = write_metrics_csv(out / "metrics.csv", rows)
    print(json.dumps(summary, indent=2))
    with open(out / "eval-summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"metrics: {csv_path}")
    return 0


def _cmd_sweep(args):
    cfg, tree = load_experiment(args.config, _overrides(args))
    flags = _flags(cfg, args)
    spec = _env_spec(cfg, flags)
    policy, _ = _load_policy(cfg, spec, args.checkpoint)
    episodes = args.episodes or cfg.eval_episodes
    out = Path(cfg.out)
    write_resolved(tree, out)
    with RolloutCollector(spec, cfg.workers) as collector:
        rows, summaries, trend = sweep_action_scale(
            collector, policy.get_params(), args.scales, episodes,
            cfg.eval_seed, run_id=Path(args.checkpoint).stem,
            episode_steps=cfg.eval_episode_steps)
    csv_path = write_metrics_csv(out / "sweep-metrics.csv", rows)
    report = {"per_scale": {str(k): v for k, v in summaries.items()},
              "trend": trend}
    print(json.dumps(report, indent=2))
    with open(out / "sweep-report.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(f"metrics: {csv_path}")
    return 0


def _cmd_schema(args):
    cfg, _ = load_experiment(args.config)
    flags = _flags(cfg, args)
    spec = _env_spec(cfg, flags)
    env = spec.build()
    doc = schema_document(env.human_obs, env.robot_obs,
                          env.human.chain.n_joints, env.robot.chain.n_joints,
                          flags)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args, compare_phases=False)
        if args.command == "curriculum":
            return _cmd_train(args, compare_phases=True)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "sweep-action-scale":
            return _cmd_sweep(args)
        if args.command == "schema":
            return _cmd_schema(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
