"""Joint reward for the dressing task.

Five terms share one weighted sum: limb progress (with a success bonus),
garment deformation, geodesic shaping, the perceived-force penalty, and a
per-group rest-pose regularizer.  All functions are pure; the environment
evaluates them on the post-substep state each policy step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

REST_GROUPS = ("torso", "spine", "neck", "left_arm", "right_arm")


@dataclass(frozen=True)
class RewardWeights:
    """Scalar term weights, the rest-pose group vector and the force-penalty
    shape parameters (midpoint in newtons, slope in 1/N)."""

    w1: float
    w2: float
    w3: float
    w4: float
    w5: tuple[float, float, float, float, float]
    w_mid: float = 30.0
    w_scale: float = 0.1

    def __post_init__(self):
        vals = (self.w1, self.w2, self.w3, self.w4, *self.w5, self.w_mid)
        if any((not np.isfinite(v)) or v < 0.0 for v in vals):
            raise ConfigError("reward weights must be finite and >= 0")
        if self.w_scale <= 0.0:
            raise ConfigError("w_scale must be positive")

    def w5_array(self) -> np.ndarray:
        return np.asarray(self.w5, dtype=float)


# Task presets.  The T-shirt row ships as data only; its task is not built.
WEIGHT_PRESETS = {
    "gown-one-arm": RewardWeights(40.0, 5.0, 0.0, 5.0, (40.0, 4.0, 8.0, 4.0, 0.5)),
    "gown-two-arms": RewardWeights(40.0, 5.0, 0.0, 5.0, (45.0, 5.0, 4.0, 0.25, 0.25)),
    "tshirt": RewardWeights(20.0, 5.0, 15.0, 5.0, (40.0, 5.0, 4.0, 0.0, 0.0)),
}


def weight_preset(name: str, **overrides) -> RewardWeights:
    try:
        preset = WEIGHT_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown reward preset: {name!r}") from None
    if overrides:
        if "w5" in overrides:
            overrides["w5"] = tuple(float(v) for v in overrides["w5"])
        preset = replace(preset, **overrides)
    return preset


@dataclass(frozen=True)
class RewardBreakdown:
    r_p: float
    r_d: float
    r_g: float
    r_c: float
    r_r: np.ndarray  # per rest-pose group
    total: float


def perceived_force_penalty(f_max: float, w_mid: float, w_scale: float) -> float:
    """Smooth penalty on the largest aggregated force felt by the human.

    Equals -1/2 at f_max == w_mid, strictly decreasing, bounded in (-1, 0).
    """
    return -np.tanh(w_scale * (f_max - w_mid)) / 2.0 - 0.5


def linear_force_penalty(f_max: float, f_ref: float) -> float:
    """Curriculum-refinement penalty: linear in f_max, -1 at f_ref."""
    return -f_max / f_ref


def progress_reward(progress) -> float:
    """Clamped progress plus a +1 bonus at or past the success threshold.

    Accepts a scalar or a per-limb sequence (multi-limb tasks average)."""
    p = np.atleast_1d(np.asarray(progress, dtype=float))
    return float(np.mean(np.minimum(p, 1.0) + (p >= 1.0)))


def deformation_penalty(max_stretch: float, slack: float = 1.05) -> float:
    """Penalty on stretch ratio beyond the slack threshold."""
    return -max(max_stretch - slack, 0.0)


def geodesic_reward(geodesic: float, d0: float) -> float:
    """Linear shaping toward the opening, normalized by the episode-start
    distance.  Defined as 1 when the episode already started at the opening."""
    if d0 <= 0.0:
        return 1.0
    return max(1.0 - geodesic / d0, 0.0)


def rest_pose_penalty(q, q_rest, group_map, w5):
    """Per-group negative mean squared deviation from the rest pose.

    ``group_map`` assigns every DOF one of the five group indices.  Returns
    (weighted scalar, per-group vector); empty groups contribute zero.
    """
    q = np.asarray(q, dtype=float)
    q_rest = np.asarray(q_rest, dtype=float)
    gm = np.asarray(group_map, dtype=np.int64)
    if gm.shape != q.shape:
        raise ConfigError("group map must assign every DOF exactly once")
    if gm.size and (gm.min() < 0 or gm.max() >= len(REST_GROUPS)):
        raise ConfigError("group map index outside the five rest-pose groups")
    r_r = np.zeros(len(REST_GROUPS))
    sq = (q - q_rest) ** 2
    for g in range(len(REST_GROUPS)):
        mask = gm == g
        if mask.any():
            r_r[g] = -float(np.mean(sq[mask]))
    w5 = np.asarray(w5, dtype=float)
    return float(np.dot(w5, r_r)), r_r


def total_reward(r_p: float, r_d: float, r_g: float, r_c: float, r_r,
                 weights: RewardWeights) -> RewardBreakdown:
    """Weighted sum of the five terms; the breakdown is retained for logs."""
    r_r = np.asarray(r_r, dtype=float)
    total = (weights.w1 * r_p + weights.w2 * r_d + weights.w3 * r_g
             + weights.w4 * r_c + float(np.dot(weights.w5_array(), r_r)))
    return RewardBreakdown(r_p, r_d, r_g, r_c, r_r, total)


def compute_reward(progress, max_stretch, geodesic, d0, f_max, q, q_rest,
                   group_map, weights: RewardWeights, penalty_form: str = "eq2",
                   force_ref: float = 50.0, slack: float = 1.05) -> RewardBreakdown:
    """Evaluate every term on raw state quantities and combine them."""
    r_p = progress_reward(progress)
    r_d = deformation_penalty(max_stretch, slack)
    r_g = geodesic_reward(geodesic, d0)
    if penalty_form == "linear":
        r_c = linear_force_penalty(f_max, force_ref)
    else:
        r_c = perceived_force_penalty(f_max, weights.w_mid, weights.w_scale)
    _, r_r = rest_pose_penalty(q, q_rest, group_map, weights.w5_array())
    return total_reward(r_p, r_d, r_g, r_c, r_r, weights)
