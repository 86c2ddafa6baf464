"""Experiment configuration: one human-editable YAML tree with includes.

``include: [name, ...]`` entries merge named presets (shipped under
``codress/presets``) or relative paths, earlier entries first, with the
including file winning.  Unknown keys are rejected by full path so typos
fail loudly.  The resolved tree is written next to any outputs for
reproducibility.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .body import ImpairmentSpec
from .curriculum import PhaseSpec
from .env import GeometryConfig, TaskConfig
from .errors import ConfigError
from .garment import SleeveModel
from .reward import RewardWeights, weight_preset
from .sensors import AblationFlags
from .trpo import TrpoConfig


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    workers: int = 1
    out: str = "runs/experiment"
    task: TaskConfig = field(default_factory=TaskConfig)
    trpo: TrpoConfig = field(default_factory=TrpoConfig)
    phases: tuple = ()
    ablation: AblationFlags = field(default_factory=AblationFlags)
    eval_episodes: int = 100
    eval_seed: int = 5000
    eval_episode_steps: int | None = None  # sweep/eval horizon override

    def __post_init__(self):
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _read_yaml(path: Path) -> dict:
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    return data


def _resolve_include(name: str, relative_to: Path) -> Path:
    candidate = (relative_to / name).expanduser()
    if candidate.exists():
        return candidate
    pkg = resources.files("codress") / "presets" / f"{name}.yaml"
    try:
        if pkg.is_file():
            return Path(str(pkg))
    except (OSError, TypeError):  # pragma: no cover
        pass
    raise ConfigError(f"cannot resolve include {name!r}")


def load_config_tree(path, _seen=None) -> dict:
    """YAML with recursive include resolution (include list applies first)."""
    path = Path(path)
    _seen = _seen or set()
    key = str(path.resolve()) if path.exists() else str(path)
    if key in _seen:
        raise ConfigError(f"include cycle through {path}")
    _seen = _seen | {key}
    data = _read_yaml(path)
    includes = data.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        inc_path = _resolve_include(str(inc), path.parent)
        merged = deep_merge(merged, load_config_tree(inc_path, _seen))
    return deep_merge(merged, data)


def _coerce(value, typ, path):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


_TUPLE_FIELDS = {"axis", "torso_base", "torso_top", "shoulder", "human_rest",
                 "robot_base", "grip_box_min", "grip_box_max", "ee_separation",
                 "gravity", "weakness_range", "rom_min_range", "rom_max_range",
                 "w5"}


def build_dataclass(cls, data: dict, path: str):
    """Construct a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {data!r}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {path}.{key}")
        f = fields[key]
        sub = f"{path}.{key}"
        if dataclasses.is_dataclass(f.type) if isinstance(f.type, type) else False:
            kwargs[key] = build_dataclass(f.type, value, sub)
        elif key in _TUPLE_FIELDS and isinstance(value, (list, tuple)):
            kwargs[key] = tuple(value)
        elif isinstance(f.default, bool):
            kwargs[key] = _coerce(value, bool, sub)
        elif isinstance(f.default, int) and not isinstance(f.default, bool):
            kwargs[key] = _coerce(value, int, sub)
        elif isinstance(f.default, float):
            kwargs[key] = _coerce(value, float, sub)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from None


def build_weights(data, path: str) -> RewardWeights:
    """Weights from a preset name or a mapping (optionally preset-based)."""
    if isinstance(data, str):
        return weight_preset(data)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected preset name or mapping")
    data = dict(data)
    preset = data.pop("preset", None)
    if "w5" in data:
        data["w5"] = tuple(float(v) for v in data["w5"])
    if preset is not None:
        return weight_preset(preset, **data)
    return build_dataclass(RewardWeights, data, path)


def build_phase(data: dict, path: str) -> PhaseSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    data = dict(data)
    weights = build_weights(data.pop("weights", "gown-one-arm"),
                            f"{path}.weights")
    if "penalty" in data:
        data["penalty_form"] = data.pop("penalty")
    known = {"name", "iterations", "penalty_form", "force_ref",
             "checkpoint_every", "stop_success"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key {path}.{sorted(unknown)[0]}")
    return PhaseSpec(weights=weights, **data)


def build_task(data: dict, path: str) -> TaskConfig:
    data = dict(data)
    sub = {}
    if "impairment" in data:
        sub["impairment"] = build_dataclass(ImpairmentSpec,
                                            data.pop("impairment"),
                                            f"{path}.impairment")
    if "sleeve" in data:
        sub["sleeve"] = build_dataclass(SleeveModel, data.pop("sleeve"),
                                        f"{path}.sleeve")
    if "geometry" in data:
        sub["geometry"] = build_dataclass(GeometryConfig, data.pop("geometry"),
                                          f"{path}.geometry")
    if "obs_scales" in data:
        scales = data.pop("obs_scales")
        if not isinstance(scales, dict):
            raise ConfigError(f"{path}.obs_scales: expected a mapping")
        sub["obs_scales"] = tuple(sorted(scales.items()))
    task = build_dataclass(TaskConfig, data, path)
    return dataclasses.replace(task, **sub) if sub else task


def build_experiment(tree: dict) -> ExperimentConfig:
    tree = dict(tree)
    task = build_task(tree.pop("task", {}), "task")
    trpo = build_dataclass(TrpoConfig, tree.pop("trpo", {}), "trpo")
    ablation = build_dataclass(AblationFlags, tree.pop("ablation", {}),
                               "ablation")
    phases_data = tree.pop("phases", [])
    if not isinstance(phases_data, list):
        raise ConfigError("phases: expected a list")
    phases = tuple(build_phase(p, f"phases[{i}]")
                   for i, p in enumerate(phases_data))
    eval_data = tree.pop("eval", {})
    if not isinstance(eval_data, dict):
        raise ConfigError("eval: expected a mapping")
    extra = {}
    for key, target in (("episodes", "eval_episodes"), ("seed", "eval_seed"),
                        ("episode_steps", "eval_episode_steps")):
        if key in eval_data:
            extra[target] = eval_data.pop(key)
    if eval_data:
        raise ConfigError(f"unknown config key eval.{sorted(eval_data)[0]}")
    known = {"seed", "workers", "out"}
    unknown = set(tree) - known
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]}")
    return ExperimentConfig(task=task, trpo=trpo, phases=phases,
                            ablation=ablation, **tree, **extra)


def load_experiment(path, overrides: dict | None = None) -> tuple:
    """Load + resolve a config file; returns (ExperimentConfig, resolved dict)."""
    tree = load_config_tree(path)
    if overrides:
        tree = deep_merge(tree, overrides)
    return build_experiment(tree), tree


def write_resolved(tree: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resolved-config.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(tree, f, sort_keys=True)
    return path
