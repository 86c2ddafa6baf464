"""Articulated kinematic chains with PD torque control and impairment models.

A chain is a tree of hinge joints; link i extends from its joint origin along
the local +x axis.  Joint-space dynamics use unit inertia per DOF: the PD
controller and the torque/joint limits are the contract, not the inertia
model.  Each unclamped substep propagates the linear closed-loop system
exactly (unconditionally stable at any gain); saturated substeps integrate
the constant clamped torque against passive damping.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class JointSpec:
    """One hinge DOF: rotation axis, limits, torque bound and PD gains."""

    axis: tuple[float, float, float]
    q_min: float
    q_max: float
    torque_limit: float
    kp: float = 100.0
    kd: float = 20.0
    damping: float = 0.0

    def __post_init__(self):
        if self.q_min > self.q_max:
            raise ConfigError(f"joint limits inverted: [{self.q_min}, {self.q_max}]")
        if self.torque_limit <= 0.0:
            raise ConfigError("torque_limit must be positive")
        if self.kp < 0.0 or self.kd < 0.0 or self.damping < 0.0:
            raise ConfigError("gains must be non-negative")
        ax = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(ax)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-9:
            raise ConfigError("joint axis must be a unit vector")


@dataclass(frozen=True)
class Link:
    """Chain element: parent index, fixed offset transform, joint, geometry."""

    parent: int
    offset_pos: tuple[float, float, float]
    joint: JointSpec
    length: float
    radius: float
    offset_rot: tuple = None  # 3x3 nested tuple; identity when None

    def __post_init__(self):
        if self.length <= 0.0 or self.radius <= 0.0:
            raise ConfigError("link length and capsule radius must be positive")


class ChainModel:
    """Immutable chain description with kernel-ready flat arrays."""

    def __init__(self, links, base_pos=(0.0, 0.0, 0.0), base_rot=None,
                 q_rest=None):
        if not links:
            raise ConfigError("chain needs at least one link")
        n = len(links)
        for i, ln in enumerate(links):
            if ln.parent >= i:
                raise ConfigError("links must be topologically ordered (parent < index)")
        self.links = tuple(links)
        self.n_joints = n
        self.parent = np.array([ln.parent for ln in links], dtype=np.int64)
        self.off_pos = np.array([ln.offset_pos for ln in links], dtype=float)
        self.off_rot = np.array(
            [np.eye(3) if ln.offset_rot is None else ln.offset_rot for ln in links],
            dtype=float)
        self.axis = np.array([ln.joint.axis for ln in links], dtype=float)
        self.link_len = np.array([ln.length for ln in links], dtype=float)
        self.radius = np.array([ln.radius for ln in links], dtype=float)
        self.q_min = np.array([ln.joint.q_min for ln in links], dtype=float)
        self.q_max = np.array([ln.joint.q_max for ln in links], dtype=float)
        self.torque_limit = np.array([ln.joint.torque_limit for ln in links], dtype=float)
        self.kp = np.array([ln.joint.kp for ln in links], dtype=float)
        self.kd = np.array([ln.joint.kd for ln in links], dtype=float)
        self.damping = np.array([ln.joint.damping for ln in links], dtype=float)
        self.base_pos = np.asarray(base_pos, dtype=float)
        self.base_rot = np.eye(3) if base_rot is None else np.asarray(base_rot, dtype=float)
        self.q_rest = (np.zeros(n) if q_rest is None
                       else np.asarray(q_rest, dtype=float).copy())
        if self.q_rest.shape != (n,):
            raise ConfigError("q_rest length mismatch")
        self._prop_cache: dict[float, np.ndarray] = {}

    def propagator(self, dt: float) -> np.ndarray:
        """Per-joint 2x2 exact propagators of the closed-loop PD system."""
        cached = self._prop_cache.get(dt)
        if cached is None:
            cached = np.stack([
                pd_propagator(self.kp[i], self.kd[i] + self.damping[i], dt)
                for i in range(self.n_joints)
            ])
            self._prop_cache[dt] = cached
        return cached


@dataclass
class ChainState:
    """Joint angles and velocities."""

    q: np.ndarray
    qdot: np.ndarray

    def copy(self) -> "ChainState":
        return ChainState(self.q.copy(), self.qdot.copy())


@dataclass(frozen=True)
class CapabilityVector:
    """Per-episode impairment parameters conditioning the human policy.

    Inactive elements are held at their fully-capable values: zero noise,
    nominal joint limits, unit strength.
    """

    noise_norm: float
    j_min_sample: float
    j_max_sample: float
    strength_scale: float

    def __post_init__(self):
        if not 0.0 <= self.noise_norm <= 1.0:
            raise ConfigError("noise_norm must be in [0, 1]")
        if not 0.0 < self.strength_scale <= 1.0:
            raise ConfigError("strength_scale must be in (0, 1]")
        if self.j_min_sample > self.j_max_sample:
            raise ConfigError("sampled joint limits inverted")

    def as_array(self) -> np.ndarray:
        return np.array([self.noise_norm, self.j_min_sample,
                         self.j_max_sample, self.strength_scale])


def fully_capable(model: ChainModel, rom_joint: int) -> CapabilityVector:
    return CapabilityVector(0.0, model.q_min[rom_joint], model.q_max[rom_joint], 1.0)


def pd_propagator(kp: float, b: float, dt: float) -> np.ndarray:
    """Matrix exponential of [[0,1],[-kp,-b]]*dt in closed form.

    b is the total velocity gain (kd + passive damping).  Near the critically
    damped boundary the hyperbolic/trig terms are replaced by their series to
    avoid cancellation.
    """
    disc = 0.25 * b * b - kp
    if abs(disc) * dt * dt < 1e-10:
        x = disc * dt * dt
        c = 1.0 + x / 2.0 + x * x / 24.0
        s = dt * (1.0 + x / 6.0 + x * x / 120.0)
    elif disc > 0.0:
        w = np.sqrt(disc)
        c = np.cosh(w * dt)
        s = np.sinh(w * dt) / w
    else:
        w = np.sqrt(-disc)
        c = np.cos(w * dt)
        s = np.sin(w * dt) / w
    decay = np.exp(-0.5 * b * dt)
    return decay * np.array([
        [c + 0.5 * b * s, s],
        [-kp * s, c - 0.5 * b * s],
    ])


class FkResult:
    """World-frame rotations, joint origins and link tips of a chain pose."""

    __slots__ = ("rot", "joint_pos", "tip_pos", "radius")

    def __init__(self, rot, joint_pos, tip_pos, radius):
        self.rot = rot
        self.joint_pos = joint_pos
        self.tip_pos = tip_pos
        self.radius = radius

    @property
    def tip(self) -> np.ndarray:
        return self.tip_pos[-1]

    def capsules(self):
        """(a, b, r) arrays describing each link as a capsule."""
        return self.joint_pos, self.tip_pos, self.radius


def forward_kinematics(model: ChainModel, q: np.ndarray) -> FkResult:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_joints,):
        raise ValueError(f"expected {model.n_joints} joint angles, got {q.shape}")
    rot, jpos, tip = kernels.fk_chain(model.parent, model.off_pos,
                                      model.off_rot, model.axis,
                                      model.link_len, model.base_rot,
                                      model.base_pos, q)
    return FkResult(rot, jpos, tip, model.radius)


def step_pd(model: ChainModel, state: ChainState, pd_target: np.ndarray,
            torque_limits: np.ndarray, dt: float, n_sub: int = 1,
            joint_limits=None):
    """Advance the chain by n_sub PD substeps of length dt.

    ``torque_limits`` and optional ``joint_limits`` (q_min, q_max) override
    the model's nominal values, which is how capability scaling enters.
    Returns (new state, actuator torques applied during the last substep).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    target = np.asarray(pd_target, dtype=float)
    lims = np.asarray(torque_limits, dtype=float)
    if target.shape != state.q.shape or lims.shape != state.q.shape:
        raise ValueError("array sizes must match the joint count")
    if not (np.isfinite(target).all() and np.isfinite(state.q).all()
            and np.isfinite(state.qdot).all()):
        raise NumericError("non-finite PD inputs")
    q_min, q_max = (model.q_min, model.q_max) if joint_limits is None else joint_limits
    q, qd, tau = kernels.pd_step(state.q, state.qdot, target,
                                 model.propagator(dt), model.kp, model.kd,
                                 model.damping, lims, q_min, q_max, dt,
                                 n_sub)
    return ChainState(q, qd), tau


def apply_capability(cap: CapabilityVector, pd_target: np.ndarray,
                     model: ChainModel, affected, rom_joint, rng):
    """Distort the actuated PD target and the joint/torque limits.

    The returned target is the one the PD controllers track; the policy-visible
    target is not touched by the caller.  Noise per affected DOF is uniform in
    +/- noise_norm * 0.15 * nominal range.  The sampled range-of-motion limits
    replace the nominal ones on ``rom_joint``; torque limits scale uniformly.
    """
    affected = np.asarray(affected, dtype=np.int64)
    if affected.size and (affected.min() < 0 or affected.max() >= model.n_joints):
        raise ValueError("affected joint index out of range")
    target = np.asarray(pd_target, dtype=float).copy()
    if cap.noise_norm > 0.0 and affected.size:
        span = cap.noise_norm * 0.15 * (model.q_max[affected] - model.q_min[affected])
        target[affected] += rng.uniform(-span, span)
    q_min = model.q_min.copy()
    q_max = model.q_max.copy()
    if rom_joint is not None:
        q_min[rom_joint] = cap.j_min_sample
        q_max[rom_joint] = cap.j_max_sample
    torque_limits = model.torque_limit * cap.strength_scale
    return target, (q_min, q_max), torque_limits


@dataclass(frozen=True)
class ImpairmentSpec:
    """Which capability dimension varies and over what ranges."""

    kind: str = "none"  # none | dyskinesia | weakness | limited-rom
    noise_fraction_max: float = 0.15
    weakness_range: tuple[float, float] = (0.1, 0.6)
    rom_min_range: tuple[float, float] | None = None
    rom_max_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("none", "dyskinesia", "weakness", "limited-rom"):
            raise ConfigError(f"unknown impairment kind: {self.kind!r}")
        for name in ("weakness_range", "rom_min_range", "rom_max_range"):
            r = getattr(self, name)
            if r is not None and r[0] > r[1]:
                raise ConfigError(f"{name} is inverted: {r}")


def sample_capability(spec: ImpairmentSpec, model: ChainModel,
                      rom_joint: int, rng) -> CapabilityVector:
    """Draw a per-episode capability vector.

    Dyskinesia draws the maximum deviation fraction uniformly and stores it
    normalized by the configured maximum.  Weakness draws a torque scale.
    Limited range of motion draws j_min and j_max from their sub-ranges,
    rejecting draws with j_max < j_min.
    """
    nominal = fully_capable(model, rom_joint)
    if spec.kind == "none":
        return nominal
    if spec.kind == "dyskinesia":
        frac = rng.uniform(0.0, spec.noise_fraction_max)
        norm = frac / spec.noise_fraction_max if spec.noise_fraction_max > 0 else 0.0
        return replace(nominal, noise_norm=norm)
    if spec.kind == "weakness":
        lo, hi = spec.weakness_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"weakness_range outside (0, 1]: {spec.weakness_range}")
        return replace(nominal, strength_scale=rng.uniform(lo, hi))
    # limited-rom
    lo_r = spec.rom_min_range or (model.q_min[rom_joint], model.q_max[rom_joint])
    hi_r = spec.rom_max_range or (model.q_min[rom_joint], model.q_max[rom_joint])
    for _ in range(10000):
        j_min = rng.uniform(*lo_r)
        j_max = rng.uniform(*hi_r)
        if j_max >= j_min:
            return replace(nominal, j_min_sample=j_min, j_max_sample=j_max)
    raise ConfigError("limited-rom ranges admit no ordered (j_min, j_max) pair")


@dataclass
class Capsules:
    """A set of capsules tagged with body-link indices.

    ``containable`` marks capsules a garment tube can envelop (limbs); the
    rest (torso) act as solid obstacles."""

    a: np.ndarray
    b: np.ndarray
    r: np.ndarray
    link: np.ndarray
    containable: np.ndarray = None

    def __post_init__(self):
        if self.containable is None:
            self.containable = np.ones(self.a.shape[0], dtype=np.uint8)

    @staticmethod
    def empty() -> "Capsules":
        return Capsules(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0),
                        np.zeros(0, dtype=np.int64))

    @staticmethod
    def concat(parts) -> "Capsules":
        return Capsules(np.concatenate([p.a for p in parts]),
                        np.concatenate([p.b for p in parts]),
                        np.concatenate([p.r for p in parts]),
                        np.concatenate([p.link for p in parts]),
                        np.concatenate([p.containable for p in parts]))

    def __len__(self) -> int:
        return self.a.shape[0]


def closest_point_on_body(capsules: Capsules, point: np.ndarray):
    """Closest surface point and distance from ``point`` to the capsule set.

    Distance is zero when the point is inside any capsule.
    """
    if len(capsules) == 0:
        raise ValueError("need at least one capsule")
    d, pt, _ = kernels.point_body(np.asarray(point, dtype=float),
                                  capsules.a, capsules.b, capsules.r)
    return pt, d
