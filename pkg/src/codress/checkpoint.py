"""Single-file checkpoint format.

Layout: 8-byte magic, little-endian uint64 manifest length, canonical-JSON
manifest, then the raw little-endian float64 parameter arrays in manifest
order (human policy weights, robot policy weights, value weights, log-stds).
The manifest records layer sizes, the observation schema hash and the flat
parameter layout, and loading validates the hash so an incompatible
observation layout is rejected by name rather than by shape error.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"CODRESS1"
VERSION = 1


def _canonical(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(path, policy, value_net, schema_hash: str,
                    extra: dict | None = None):
    """Write the joint policy and value baseline to one file."""
    arrays = {
        "human_policy": policy.human.mlp.params,
        "robot_policy": policy.robot.mlp.params,
        "value": value_net.mlp.params,
        "log_stds": np.concatenate([policy.human.log_std,
                                    policy.robot.log_std]),
    }
    manifest = {
        "version": VERSION,
        "schema_hash": schema_hash,
        "layer_sizes": {
            "human": list(policy.human.mlp.sizes),
            "robot": list(policy.robot.mlp.sizes),
            "value": list(value_net.mlp.sizes),
        },
        "value_target_scale": value_net.target_scale,
        "param_layout": {
            "human": [[n, s, o] for n, s, o in policy.human.layout()],
            "robot": [[n, s, o] for n, s, o in policy.robot.layout()],
        },
        "arrays": [{"name": k, "dtype": "<f8", "length": int(v.shape[0])}
                   for k, v in arrays.items()],
        "extra": extra or {},
    }
    blob = _canonical(manifest)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint64(len(blob)).tobytes())
        f.write(blob)
        for spec in manifest["arrays"]:
            f.write(np.ascontiguousarray(arrays[spec["name"]],
                                         dtype="<f8").tobytes())
    os.replace(tmp, path)
    return path


def load_checkpoint(path, expected_schema_hash: str | None = None):
    """Read a checkpoint; returns (arrays dict, manifest).

    A schema-hash mismatch raises CheckpointError naming both hashes.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        (n,) = np.frombuffer(f.read(8), dtype=np.uint64)
        try:
            manifest = json.loads(f.read(int(n)).decode())
        except ValueError as e:
            raise CheckpointError(f"corrupt manifest in {path}: {e}") from None
        arrays = {}
        for spec in manifest["arrays"]:
            raw = f.read(spec["length"] * 8)
            if len(raw) != spec["length"] * 8:
                raise CheckpointError(f"truncated array {spec['name']} in {path}")
            arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").copy()
    if (expected_schema_hash is not None
            and manifest["schema_hash"] != expected_schema_hash):
        raise CheckpointError(
            f"schema hash mismatch: checkpoint {manifest['schema_hash']} vs "
            f"configured {expected_schema_hash}")
    return arrays, manifest


def apply_checkpoint(arrays, policy, value_net=None):
    """Load parameter arrays into live networks (shape-checked)."""
    for name, target in (("human_policy", policy.human.mlp),
                         ("robot_policy", policy.robot.mlp)):
        if arrays[name].shape[0] != target.n_params:
            raise CheckpointError(
                f"{name}: expected {target.n_params} parameters, "
                f"got {arrays[name].shape[0]}")
        target.params[:] = arrays[name]
    ls = arrays["log_stds"]
    nh = policy.human.act_dim
    policy.human.log_std[:] = ls[:nh]
    policy.robot.log_std[:] = ls[nh:]
    if value_net is not None:
        if arrays["value"].shape[0] != value_net.mlp.n_params:
            raise CheckpointError("value net size mismatch")
        value_net.mlp.params[:] = arrays["value"]
