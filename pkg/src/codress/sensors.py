"""Simulated sensing and observation assembly.

The force-torque sensor sums the garment grip reaction and any rigid tool
contacts, expressed in the end-effector frame.  The capacitive sensor is a
2x3 grid of proximity probes on the gripper face, each reading the clipped
distance to the nearest point on the human body.  Observation vectors are
packed through a named-slice layout that is a pure function of the task
configuration, so checkpoints can validate compatibility via a schema hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .body import Capsules, closest_point_on_body
from .errors import SchemaError

CAPACITIVE_RANGE = 0.15  # proximity probes clip at 15 cm
CAPACITIVE_GRID = (2, 3)
CAPACITIVE_FACE = (0.04, 0.06)  # gripper-face rectangle, meters

DEFAULT_SCALES = {
    "qdot": 0.1,
    "haptics": 0.02,
    "force_torque": 0.02,
    "capacitive": 1.0 / CAPACITIVE_RANGE,
}


@dataclass(frozen=True)
class AblationFlags:
    drop_capacitive: bool = False
    drop_human_joint_positions: bool = False


@dataclass(frozen=True)
class Field:
    name: str
    length: int
    scale: float = 1.0


class ObservationLayout:
    """Ordered named slices that tile a flat observation vector."""

    def __init__(self, fields):
        self.fields = tuple(fields)
        self._slices = {}
        offset = 0
        for f in self.fields:
            if f.name in self._slices:
                raise SchemaError(f"duplicate field {f.name!r}")
            self._slices[f.name] = slice(offset, offset + f.length)
            offset += f.length
        self.size = offset

    def names(self):
        return [f.name for f in self.fields]

    def slice_of(self, name: str) -> slice:
        try:
            return self._slices[name]
        except KeyError:
            raise SchemaError(f"no field {name!r} in layout") from None

    def has(self, name: str) -> bool:
        return name in self._slices

    def pack(self, values: dict) -> np.ndarray:
        out = np.empty(self.size)
        for f in self.fields:
            try:
                v = np.asarray(values[f.name], dtype=float).ravel()
            except KeyError:
                raise SchemaError(f"missing observation field {f.name!r}") from None
            if v.shape[0] != f.length:
                raise SchemaError(
                    f"field {f.name!r}: expected length {f.length}, got {v.shape[0]}")
            out[self._slices[f.name]] = v * f.scale
        return out

    def unpack(self, vec: np.ndarray) -> dict:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise SchemaError(f"expected observation of length {self.size}")
        return {f.name: vec[self._slices[f.name]] / f.scale for f in self.fields}

    def describe(self):
        out = []
        offset = 0
        for f in self.fields:
            out.append({"name": f.name, "offset": offset, "length": f.length,
                        "scale": f.scale})
            offset += f.length
        return out


def _scale_for(base: str, scales: dict) -> float:
    merged = dict(DEFAULT_SCALES)
    merged.update(scales or {})
    return float(merged.get(base, 1.0))


@dataclass(frozen=True)
class LayoutDims:
    """Counts the layouts are built from; a pure function of the task."""

    n_human_dof: int
    n_robot_dof: int
    n_human_links: int
    n_human_points: int
    n_robot_points: int
    n_arms: int = 1
    n_limbs: int = 1


def human_layout(dims: LayoutDims, scales: dict | None = None) -> ObservationLayout:
    s = lambda base: _scale_for(base, scales)
    jp = 3 * (dims.n_human_points + dims.n_arms * dims.n_robot_points)
    return ObservationLayout([
        Field("q", dims.n_human_dof, s("q")),
        Field("qdot", dims.n_human_dof, s("qdot")),
        Field("haptics", dims.n_human_links, s("haptics")),
        Field("garment", 6 * dims.n_limbs, s("garment")),
        Field("task", 2 * dims.n_limbs, s("task")),
        Field("joint_positions", jp, s("joint_positions")),
        Field("target_prev", dims.n_human_dof, s("target_prev")),
        Field("capability", 4, s("capability")),
    ])


def robot_layout(dims: LayoutDims, flags: AblationFlags = AblationFlags(),
                 scales: dict | None = None) -> ObservationLayout:
    """Per-arm sensing blocks plus the shared human joint positions.

    Ablated slices are removed outright (the network input shrinks); the
    capability vector never appears here.
    """
    s = lambda base: _scale_for(base, scales)
    fields = []
    for arm in range(dims.n_arms):
        fields.append(Field(f"q_{arm}", dims.n_robot_dof, s("q")))
        fields.append(Field(f"qdot_{arm}", dims.n_robot_dof, s("qdot")))
        fields.append(Field(f"force_torque_{arm}", 6, s("force_torque")))
        if not flags.drop_capacitive:
            fields.append(Field(f"capacitive_{arm}", 6, s("capacitive")))
        fields.append(Field(f"robot_joint_positions_{arm}",
                            3 * dims.n_robot_points, s("joint_positions")))
        fields.append(Field(f"target_prev_{arm}", dims.n_robot_dof, s("target_prev")))
    if not flags.drop_human_joint_positions:
        fields.append(Field("human_joint_positions", 3 * dims.n_human_points,
                            s("joint_positions")))
    return ObservationLayout(fields)


def force_torque_reading(grip_wrench, contact_wrenches, ee_rot) -> np.ndarray:
    """Six-dimensional sum of the garment and rigid-contact wrenches.

    Inputs are world-frame wrenches about the sensor origin; the reading is
    expressed in the end-effector (tool) frame.
    """
    total = np.asarray(grip_wrench, dtype=float).copy()
    for w in contact_wrenches:
        total = total + np.asarray(w, dtype=float)
    r = np.asarray(ee_rot, dtype=float)
    out = np.empty(6)
    out[:3] = r.T @ total[:3]
    out[3:] = r.T @ total[3:]
    return out


def _grid_offsets() -> np.ndarray:
    rows, cols = CAPACITIVE_GRID
    dy, dz = CAPACITIVE_FACE
    ys = np.linspace(-dy / 2, dy / 2, rows)
    zs = np.linspace(-dz / 2, dz / 2, cols)
    return np.array([(0.0, y, z) for y in ys for z in zs])


_GRID_LOCAL = _grid_offsets()


def capacitive_grid(ee_rot, face_center) -> np.ndarray:
    """World positions of the 2x3 probe grid on the gripper face.

    Rows span the local y axis, columns the local z axis; the face center
    sits at the grip point.
    """
    return np.asarray(face_center) + _GRID_LOCAL @ np.asarray(ee_rot).T


def capacitive_reading(sensor_points, capsules: Capsules) -> np.ndarray:
    """Clipped nearest-body distance per probe."""
    pts = np.ascontiguousarray(sensor_points, dtype=float)
    if pts.shape[0] != CAPACITIVE_GRID[0] * CAPACITIVE_GRID[1]:
        raise SchemaError("capacitive grid must have 6 probes")
    out = np.empty(pts.shape[0])
    kernels.points_body_distance(pts, capsules.a, capsules.b, capsules.r, out)
    return np.minimum(out, CAPACITIVE_RANGE)


def build_observation_human(values: dict, layout: ObservationLayout) -> np.ndarray:
    return layout.pack(values)


def build_observation_robot(values: dict, layout: ObservationLayout) -> np.ndarray:
    for name in values:
        if name.startswith("capability"):
            raise SchemaError("capability must not enter the robot observation")
    return layout.pack(values)


def schema_document(human: ObservationLayout, robot: ObservationLayout,
                    n_human_act: int, n_robot_act: int,
                    flags: AblationFlags = AblationFlags()) -> dict:
    """Machine-readable observation/action schema with a stable hash."""
    doc = {
        "schema_version": 1,
        "human_observation": human.describe(),
        "robot_observation": robot.describe(),
        "joint_observation_size": human.size + robot.size,
        "action": {"human": n_human_act, "robot": n_robot_act,
                   "joint": n_human_act + n_robot_act},
        "ablation": {"drop_capacitive": flags.drop_capacitive,
                     "drop_human_joint_positions": flags.drop_human_joint_positions},
    }
    doc["hash"] = schema_hash(doc)
    return doc


def schema_hash(doc: dict) -> str:
    payload = {k: v for k, v in doc.items() if k != "hash"}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
