"""Reduced-order sleeve: a mass-spring centerline tube gripped by the robot.

The garment is a 1-D chain of particles; stretch springs join neighbors and
bend resistance comes from next-nearest-neighbor springs.  Every reward and
sensor quantity (limb progress, geodesic distance, stretch, contact force)
is a functional of the centerline geometry.  Particle 0 is the sleeve
opening; the centerline tangent there is the opening axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .body import Capsules
from .errors import ConfigError, GeometryError, NumericError


@dataclass(frozen=True)
class SleeveModel:
    n_particles: int = 16
    rest_segment_length: float = 0.03
    tube_radius: float = 0.08
    stretch_stiffness: float = 400.0
    bend_stiffness: float = 0.05
    damping: float = 1.0
    particle_mass: float = 0.008
    grip_particle_index: int = 0
    contact_stiffness: float = 2000.0
    gravity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axial_damping_ratio: float = 0.1
    mouth_segments: int = 2  # opening-side segments without rod-side contact

    def __post_init__(self):
        if self.n_particles < 4:
            raise ConfigError("sleeve needs at least 4 particles")
        for name in ("rest_segment_length", "tube_radius", "stretch_stiffness",
                     "bend_stiffness", "damping", "particle_mass",
                     "contact_stiffness"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.grip_particle_index < self.n_particles:
            raise ConfigError("grip_particle_index out of range")

    @property
    def rest_length_total(self) -> float:
        return self.rest_segment_length * (self.n_particles - 1)

    @property
    def bend_spring_stiffness(self) -> float:
        # next-nearest springs; stiffness scaled so the N*m bend modulus acts
        # over one segment length squared
        return self.bend_stiffness / self.rest_segment_length**2

    @property
    def axial_dashpot(self) -> float:
        # fraction of critical damping of the single-segment stretch mode
        return self.axial_damping_ratio * 2.0 * np.sqrt(
            self.stretch_stiffness * self.particle_mass)


@dataclass(frozen=True)
class Contact:
    """A penalty force applied to one human body link."""

    link: int
    force: np.ndarray
    point: np.ndarray


@dataclass
class SleeveState:
    positions: np.ndarray
    velocities: np.ndarray
    contacts: list
    contained: np.ndarray = None  # per (segment, capsule) containment flags

    def copy(self) -> "SleeveState":
        return SleeveState(self.positions.copy(), self.velocities.copy(),
                           list(self.contacts),
                           None if self.contained is None
                           else self.contained.copy())


@dataclass(frozen=True)
class ProgressReport:
    progress: float
    geodesic: float
    max_stretch: float
    f_max: float


def straight_state(model: SleeveModel, opening_pos, direction) -> SleeveState:
    """Sleeve laid out straight from the opening along ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    idx = np.arange(model.n_particles)[:, None]
    pos = np.asarray(opening_pos, dtype=float)[None, :] + idx * model.rest_segment_length * d
    return SleeveState(pos, np.zeros_like(pos), [])


def _containment_mask(model: SleeveModel, state: SleeveState, n_caps: int):
    size = (model.n_particles - 1) * n_caps
    if state.contained is None or state.contained.shape[0] != size:
        state.contained = np.zeros(size, dtype=np.uint8)
    return state.contained


_BUFFERS: dict = {}


def _contact_arrays(model: SleeveModel, n_capsules: int):
    # reusable per-process scratch; rollout workers are separate processes
    cap = (model.n_particles - 1) * max(n_capsules, 1)
    buf = _BUFFERS.get(cap)
    if buf is None:
        buf = (np.zeros((cap, 3)), np.zeros((cap, 3)),
               np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64),
               np.zeros(cap))
        _BUFFERS[cap] = buf
    return buf


def contact_records(model: SleeveModel, state: SleeveState,
                    capsules: Capsules) -> list:
    """Contacts of the current geometry under the state's containment flags.

    Pure with respect to the state: the containment mask is read, not
    updated."""
    if len(capsules) == 0:
        return []
    mask = _containment_mask(model, state, len(capsules))
    c_force, c_point, c_link, c_seg, c_sparam = _contact_arrays(model, len(capsules))
    n = kernels.garment_contacts(state.positions, mask, 0,
                                 model.mouth_segments, capsules.a, capsules.b,
                                 capsules.r, capsules.link,
                                 capsules.containable, model.tube_radius,
                                 model.contact_stiffness, c_force, c_point,
                                 c_link, c_seg, c_sparam)
    return [Contact(int(c_link[i]), c_force[i].copy(), c_point[i].copy())
            for i in range(n)]


def step_garment(model: SleeveModel, state: SleeveState, grip_pos,
                 human_capsules: Capsules, dt: float, n_sub: int = 1,
                 grip_vel=None, grip_axis=None, grip_vel2=None,
                 records: bool = True):
    """Advance the sleeve by n_sub substeps with the grip pinned.

    With ``grip_axis`` given, the gripper rigidly holds the cuff: the grip
    particle and its tube-side neighbor are pinned, the neighbor one rest
    length along the axis, so the gripper orientation sets the opening
    direction.  Otherwise only the grip particle is pinned.

    Returns (new state, reaction wrench (6,)): the negated internal forces on
    the pinned particles with torque about the grip point, from the last
    substep.  The new state's contact records are evaluated at the final
    geometry.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not np.isfinite(state.positions).all():
        raise NumericError("non-finite sleeve state")
    pos = state.positions.copy()
    vel = state.velocities.copy()
    gp = np.zeros((2, 3))
    gv = np.zeros((2, 3))
    gp[0] = np.asarray(grip_pos, dtype=float)
    if grip_vel is not None:
        gv[0] = np.asarray(grip_vel, dtype=float)
    if grip_axis is None:
        n_pin = 1
    else:
        if model.grip_particle_index + 1 >= model.n_particles:
            raise ValueError("oriented grip needs a tube-side neighbor")
        axis = np.asarray(grip_axis, dtype=float)
        gp[1] = gp[0] + axis / np.linalg.norm(axis) * model.rest_segment_length
        gv[1] = gv[0] if grip_vel2 is None else np.asarray(grip_vel2, dtype=float)
        n_pin = 2
    caps = human_capsules if human_capsules is not None else Capsules.empty()
    mask = _containment_mask(model, state, len(caps)).copy()
    scratch = np.empty_like(pos)
    c_force, c_point, c_link, c_seg, c_sparam = _contact_arrays(model, len(caps))
    wrench = kernels.garment_step(
        pos, vel, mask, model.mouth_segments, model.grip_particle_index,
        n_pin, gp, gv, model.rest_segment_length, model.stretch_stiffness,
        model.bend_spring_stiffness, model.damping, model.axial_dashpot,
        model.particle_mass, np.asarray(model.gravity, dtype=float),
        model.tube_radius, model.contact_stiffness, caps.a, caps.b, caps.r,
        caps.link, caps.containable, dt, n_sub, scratch, c_force, c_point,
        c_link, c_seg, c_sparam)
    new = SleeveState(pos, vel, [], mask)
    if records:
        new.contacts = contact_records(model, new, caps)
    return new, wrench


def settle(model: SleeveModel, state: SleeveState, grip_pos, duration: float,
           dt: float, grip_axis=None) -> SleeveState:
    """Garment-only pre-simulation with a static grip."""
    n_sub = max(int(round(duration / dt)), 1)
    new, _ = step_garment(model, state, grip_pos, Capsules.empty(), dt, n_sub,
                          grip_axis=grip_axis)
    return new


def _projection(positions: np.ndarray, tip: np.ndarray, tube_radius: float):
    """Signed opening distance plus the contained arclength of the tip.

    Returns (d_open, arclength or None).  The tip counts as contained when it
    projects interior to some segment's span within the tube bore; arclength
    is measured along the centerline from the opening.
    """
    p = positions
    segs = p[1:] - p[:-1]
    seg_len = np.linalg.norm(segs, axis=1)
    if seg_len.sum() < 1e-9:
        raise GeometryError("degenerate sleeve centerline")
    first = int(np.argmax(seg_len > 1e-12))
    axis0 = segs[first] / seg_len[first]
    d_open = float(np.dot(tip - p[0], axis0))
    ok = seg_len > 1e-12
    t = np.zeros_like(seg_len)
    t[ok] = np.einsum("ij,ij->i", (tip[None, :] - p[:-1])[ok], segs[ok]) / seg_len[ok] ** 2
    foot = p[:-1] + t[:, None] * segs
    lateral = np.linalg.norm(tip[None, :] - foot, axis=1)
    contained = ok & (t >= 0.0) & (t <= 1.0) & (lateral <= tube_radius)
    if not contained.any():
        return d_open, None
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])
    idx = np.nonzero(contained)[0]
    best = idx[np.argmin(lateral[idx])]
    return d_open, float(arc[best] + t[best] * seg_len[best])


def progress_and_geodesic(model: SleeveModel, state: SleeveState, limb_tip,
                          threshold_arclength: float):
    """(limb progress, geodesic distance) from one projection pass."""
    tip = np.asarray(limb_tip, dtype=float)
    _, arclength = _projection(state.positions, tip, model.tube_radius)
    if arclength is None:
        opening_dist = float(np.linalg.norm(tip - state.positions[0]))
        raw = -opening_dist / threshold_arclength
        geodesic = opening_dist
    else:
        raw = arclength / threshold_arclength
        geodesic = (0.0 if arclength > 0.0
                    else float(np.linalg.norm(tip - state.positions[0])))
    return float(np.clip(raw, -1.0, 1.5)), geodesic


def limb_progress(model: SleeveModel, state: SleeveState, limb_tip,
                  threshold_arclength: float) -> float:
    """Normalized insertion arclength of the limb tip along the centerline.

    A contained tip (projecting interior to a segment within the tube bore)
    reports its arclength past the opening over the success threshold; a tip
    outside the tube reports the negated distance to the opening center over
    the threshold, so approaching the opening is monotone improvement.
    Clamped to [-1, 1.5]; progress >= 1 is success.
    """
    if not 0.0 < threshold_arclength <= model.rest_length_total * 1.5:
        raise ValueError("threshold_arclength outside the sleeve span")
    progress, _ = progress_and_geodesic(model, state, limb_tip,
                                        threshold_arclength)
    return progress


def geodesic_distance(model: SleeveModel, state: SleeveState, limb_tip) -> float:
    """Distance from the limb tip to the opening center, zero once inside."""
    _, geodesic = progress_and_geodesic(model, state, limb_tip,
                                        model.rest_length_total)
    return geodesic


def deformation(model: SleeveModel, state: SleeveState) -> float:
    """Largest segment stretch ratio (current length / rest length)."""
    seg_len = np.linalg.norm(state.positions[1:] - state.positions[:-1], axis=1)
    return float(seg_len.max() / model.rest_segment_length)


def aggregate_force_on_human(contacts, n_links: int) -> float:
    """Magnitude of the largest per-link vector sum of contact forces."""
    if not contacts:
        return 0.0
    sums = np.zeros((n_links, 3))
    for c in contacts:
        sums[c.link] += c.force
    return float(np.linalg.norm(sums, axis=1).max())


def per_link_force_magnitudes(contacts, n_links: int) -> np.ndarray:
    """Per-link aggregated contact force magnitudes (haptics observation)."""
    sums = np.zeros((n_links, 3))
    for c in contacts:
        sums[c.link] += c.force
    return np.linalg.norm(sums, axis=1)


def mechanical_energy(model: SleeveModel, state: SleeveState) -> float:
    """Spring + kinetic + gravitational energy of the sleeve."""
    p, v = state.positions, state.velocities
    e = 0.5 * model.particle_mass * float(np.sum(v * v))
    g = np.asarray(model.gravity)
    e -= model.particle_mass * float(np.sum(p @ g))
    for span, k in ((1, model.stretch_stiffness),
                    (2, model.bend_spring_stiffness)):
        length = np.linalg.norm(p[span:] - p[:-span], axis=1)
        e += 0.5 * k * float(np.sum((length - span * model.rest_segment_length) ** 2))
    return e
