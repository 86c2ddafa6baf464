"""Sensor models, observation layouts and the schema document."""

import numpy as np
import pytest

from codress.body import Capsules
from codress.errors import SchemaError
from codress.sensors import (AblationFlags, CAPACITIVE_RANGE, LayoutDims,
                             build_observation_human, build_observation_robot,
                             capacitive_grid, capacitive_reading,
                             force_torque_reading, human_layout, robot_layout,
                             schema_document)


def dims(n_arms=1):
    return LayoutDims(n_human_dof=4, n_robot_dof=6, n_human_links=5,
                      n_human_points=5, n_robot_points=7, n_arms=n_arms)


def body():
    return Capsules(np.array([[0.0, 0.0, 0.0]]), np.array([[0.0, 0.0, 1.0]]),
                    np.array([0.05]), np.array([0], np.int64))


class TestForceTorque:
    def test_zero(self):
        out = force_torque_reading(np.zeros(6), [], np.eye(3))
        assert np.all(out == 0.0)

    def test_additivity(self):
        grip = np.array([0, 0, -5.0, 0, 0, 0])
        contact = np.array([1.0, 0, 0, 0, 0, 0])
        out = force_torque_reading(grip, [contact], np.eye(3))
        assert np.allclose(out, [1, 0, -5, 0, 0, 0])

    def test_linear_in_each_wrench(self):
        rng = np.random.default_rng(0)
        r = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        w1, w2 = rng.normal(size=6), rng.normal(size=6)
        a = force_torque_reading(w1, [w2], r)
        b = force_torque_reading(w1, [2 * w2], r)
        assert np.allclose(b - a, force_torque_reading(np.zeros(6), [w2], r))

    def test_frame_rotation(self):
        # rotating the end effector by R right-multiplies the frame, so the
        # reading transforms by blockdiag(R, R)^T
        rng = np.random.default_rng(1)
        wrench = rng.normal(size=6)
        base = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        extra = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        r0 = force_torque_reading(wrench, [], base)
        r1 = force_torque_reading(wrench, [], base @ extra)
        assert np.allclose(r1[:3], extra.T @ r0[:3], atol=1e-12)
        assert np.allclose(r1[3:], extra.T @ r0[3:], atol=1e-12)


class TestCapacitive:
    def test_plain_distance(self):
        pts = np.tile([[0.05, 0, 0.5]], (6, 1))
        out = capacitive_reading(pts, body())
        assert np.allclose(out, 0.0)  # touching the 0.05-radius surface

    def test_clip_at_range(self):
        pts = np.tile([[0.35, 0, 0.5]], (6, 1))
        out = capacitive_reading(pts, body())
        assert np.allclose(out, CAPACITIVE_RANGE)

    def test_mid_range(self):
        pts = np.tile([[0.10, 0, 0.5]], (6, 1))
        out = capacitive_reading(pts, body())
        assert np.allclose(out, 0.05)

    def test_bounded_and_monotone_on_approach(self):
        rng = np.random.default_rng(3)
        caps = body()
        for _ in range(20):
            start = rng.uniform([0.2, -0.2, 0], [0.4, 0.2, 1.0], 3)
            prev = None
            for t in np.linspace(0.0, 0.9, 12):
                pts = np.tile(start * (1 - t) + t * np.array([0, 0, 0.5]),
                              (6, 1))
                out = capacitive_reading(pts, caps)
                assert np.all(out >= 0.0) and np.all(out <= CAPACITIVE_RANGE)
                if prev is not None:
                    assert np.all(out <= prev + 1e-12)
                prev = out

    def test_grid_geometry(self):
        grid = capacitive_grid(np.eye(3), np.zeros(3))
        assert grid.shape == (6, 3)
        assert np.ptp(grid[:, 1]) == pytest.approx(0.04)
        assert np.ptp(grid[:, 2]) == pytest.approx(0.06)


class TestLayouts:
    def test_slices_tile_the_vector(self):
        for flags in (AblationFlags(), AblationFlags(True, False),
                      AblationFlags(False, True), AblationFlags(True, True)):
            for layout in (human_layout(dims()), robot_layout(dims(), flags)):
                offset = 0
                for f in layout.fields:
                    sl = layout.slice_of(f.name)
                    assert sl.start == offset
                    offset = sl.stop
                assert offset == layout.size

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        layout = human_layout(dims())
        values = {f.name: rng.normal(size=f.length) for f in layout.fields}
        rec = layout.unpack(layout.pack(values))
        for name, v in values.items():
            assert np.allclose(rec[name], v, atol=1e-12)

    def test_capacitive_ablation_shrinks_by_six_per_arm(self):
        for n_arms in (1, 2):
            full = robot_layout(dims(n_arms))
            cut = robot_layout(dims(n_arms), AblationFlags(drop_capacitive=True))
            assert full.size - cut.size == 6 * n_arms
            assert not cut.has("capacitive_0")

    def test_two_arm_replication(self):
        layout = robot_layout(dims(n_arms=2))
        assert layout.has("force_torque_0") and layout.has("force_torque_1")
        assert layout.has("capacitive_0") and layout.has("capacitive_1")
        assert layout.has("human_joint_positions")
        assert not layout.has("human_joint_positions_1")

    def test_robot_layout_never_contains_capability(self):
        for flags in (AblationFlags(), AblationFlags(True, True)):
            layout = robot_layout(dims(2), flags)
            assert not any("capability" in n for n in layout.names())

    def test_human_otar_slice_unaffected_by_actuation_noise(self):
        # the packed target_prev field is whatever the caller stores; the
        # noisy actuated target never reaches the layout
        layout = human_layout(dims())
        values = {f.name: np.zeros(f.length) for f in layout.fields}
        values["target_prev"] = np.array([0.1, 0.2, 0.3, 0.4])
        vec = build_observation_human(values, layout)
        sl = layout.slice_of("target_prev")
        assert np.allclose(vec[sl], [0.1, 0.2, 0.3, 0.4])

    def test_robot_builder_rejects_capability(self):
        layout = robot_layout(dims())
        values = {f.name: np.zeros(f.length) for f in layout.fields}
        values["capability"] = np.zeros(4)
        with pytest.raises(SchemaError):
            build_observation_robot(values, layout)

    def test_missing_and_mis_sized_fields(self):
        layout = human_layout(dims())
        values = {f.name: np.zeros(f.length) for f in layout.fields}
        del values["haptics"]
        with pytest.raises(SchemaError):
            layout.pack(values)
        values["haptics"] = np.zeros(2)
        with pytest.raises(SchemaError):
            layout.pack(values)


class TestSchema:
    def test_deterministic_hash(self):
        d = dims()
        a = schema_document(human_layout(d), robot_layout(d), 4, 6)
        b = schema_document(human_layout(d), robot_layout(d), 4, 6)
        assert a["hash"] == b["hash"]

    def test_ablation_changes_hash(self):
        d = dims()
        flags = AblationFlags(drop_capacitive=True)
        a = schema_document(human_layout(d), robot_layout(d), 4, 6)
        b = schema_document(human_layout(d), robot_layout(d, flags), 4, 6,
                            flags)
        assert a["hash"] != b["hash"]

    def test_field_lengths_sum_to_input_sizes(self):
        d = dims()
        hl, rl = human_layout(d), robot_layout(d)
        doc = schema_document(hl, rl, 4, 6)
        assert sum(f["length"] for f in doc["human_observation"]) == hl.size
        assert sum(f["length"] for f in doc["robot_observation"]) == rl.size
        assert doc["joint_observation_size"] == hl.size + rl.size
