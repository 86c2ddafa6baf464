"""Chain kinematics, PD stepping and capability model tests."""

import numpy as np
import pytest

from codress.body import (CapabilityVector, Capsules, ChainModel, ChainState,
                          ImpairmentSpec, JointSpec, Link, apply_capability,
                          closest_point_on_body, forward_kinematics,
                          fully_capable, sample_capability, step_pd)
from codress.errors import ConfigError, NumericError


def planar_chain(n=2, length=1.0, axis=(0, 0, 1)):
    links = []
    for i in range(n):
        off = (0.0, 0.0, 0.0) if i == 0 else (length, 0.0, 0.0)
        links.append(Link(i - 1, off,
                          JointSpec(axis, -np.pi, np.pi, 50.0), length, 0.05))
    return ChainModel(links)


def rotation(axis, angle):
    axis = np.asarray(axis, dtype=float)
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


class TestForwardKinematics:
    def test_straight_two_link(self):
        fk = forward_kinematics(planar_chain(), np.zeros(2))
        assert np.allclose(fk.tip, [2.0, 0.0, 0.0])

    def test_quarter_turn(self):
        fk = forward_kinematics(planar_chain(), [np.pi / 2, 0.0])
        assert np.allclose(fk.tip, [0.0, 2.0, 0.0], atol=1e-12)

    def test_matches_matrix_product_oracle(self):
        # independent oracle: per-joint homogeneous 4x4 products
        rng = np.random.default_rng(7)
        axes = [(0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 0, 1)]
        links = []
        offs = []
        for i, ax in enumerate(axes):
            off = tuple(rng.uniform(-0.3, 0.3, 3))
            offs.append(off)
            links.append(Link(i - 1, off, JointSpec(ax, -np.pi, np.pi, 10.0),
                              rng.uniform(0.2, 0.5), 0.04))
        model = ChainModel(links, base_pos=rng.uniform(-1, 1, 3))
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, 4)
            fk = forward_kinematics(model, q)
            T = np.eye(4)
            T[:3, 3] = model.base_pos
            for i in range(4):
                shift = np.eye(4)
                shift[:3, 3] = offs[i]
                turn = np.eye(4)
                turn[:3, :3] = rotation(axes[i], q[i])
                T = T @ shift
                assert np.allclose(fk.joint_pos[i], T[:3, 3], atol=1e-12)
                T = T @ turn
                tip = T @ np.array([model.link_len[i], 0, 0, 1.0])
                assert np.allclose(fk.tip_pos[i], tip[:3], atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            forward_kinematics(planar_chain(), np.zeros(3))


class TestStepPd:
    def single(self, kp=100.0, kd=20.0, damping=0.0, lim=1e9,
               q_range=(-10.0, 10.0)):
        return ChainModel([Link(-1, (0, 0, 0),
                                JointSpec((0, 0, 1), q_range[0], q_range[1],
                                          lim, kp, kd, damping), 0.3, 0.05)])

    def test_equilibrium(self):
        model = self.single()
        state = ChainState(np.array([0.4]), np.zeros(1))
        new, tau = step_pd(model, state, np.array([0.4]), model.torque_limit,
                           2.5e-3)
        assert new.q[0] == 0.4 and new.qdot[0] == 0.0 and tau[0] == 0.0

    def test_critically_damped_matches_closed_form(self):
        # x(t) = 1 - (1 + 10 t) e^{-10 t} for kp=100, kd=20, unit inertia
        model = self.single()
        state = ChainState(np.zeros(1), np.zeros(1))
        dt = 2.5e-3
        target = np.array([1.0])
        worst = 0.0
        for k in range(1, 2001):
            state, _ = step_pd(model, state, target, model.torque_limit, dt)
            t = k * dt
            ref = 1.0 - (1.0 + 10.0 * t) * np.exp(-10.0 * t)
            worst = max(worst, abs(state.q[0] - ref))
        assert worst < 1e-3

    def test_torque_clamp_exact(self):
        model = self.single(lim=10.0)
        state = ChainState(np.zeros(1), np.zeros(1))
        _, tau = step_pd(model, state, np.array([0.5]), model.torque_limit,
                         2.5e-3)
        assert tau[0] == 10.0

    def test_zero_gain_conserves_velocity(self):
        model = self.single(kp=0.0, kd=0.0)
        state = ChainState(np.zeros(1), np.array([1.3]))
        for _ in range(100):
            state, _ = step_pd(model, state, np.zeros(1), model.torque_limit,
                               2.5e-3)
        assert state.qdot[0] == 1.3
        assert abs(state.q[0] - 1.3 * 100 * 2.5e-3) < 1e-12

    def test_joint_limits_clamp_and_stop(self):
        model = self.single(q_range=(-0.1, 0.1))
        state = ChainState(np.zeros(1), np.zeros(1))
        for _ in range(400):
            state, _ = step_pd(model, state, np.array([2.0]),
                               model.torque_limit, 2.5e-3)
            assert -0.1 <= state.q[0] <= 0.1
        assert state.q[0] == 0.1 and state.qdot[0] == 0.0

    def test_limits_hold_for_random_targets(self):
        rng = np.random.default_rng(3)
        model = self.single(q_range=(-0.5, 0.8))
        state = ChainState(np.zeros(1), np.zeros(1))
        for _ in range(200):
            target = rng.uniform(-3, 3, 1)
            state, _ = step_pd(model, state, target, model.torque_limit,
                               2.5e-3, n_sub=4)
            assert -0.5 <= state.q[0] <= 0.8

    def test_non_finite_rejected(self):
        model = self.single()
        state = ChainState(np.zeros(1), np.zeros(1))
        with pytest.raises(NumericError):
            step_pd(model, state, np.array([np.nan]), model.torque_limit,
                    2.5e-3)


def two_link_arm():
    links = [Link(-1, (0, 0, 0), JointSpec((0, 0, 1), -1.0, 1.0, 40.0),
                  0.3, 0.05),
             Link(0, (0.3, 0, 0), JointSpec((0, 1, 0), 0.0, 2.0, 20.0),
                  0.3, 0.05)]
    return ChainModel(links)


class TestCapability:
    def arm(self):
        return two_link_arm()

    def test_fully_capable_is_identity(self):
        model = self.arm()
        cap = fully_capable(model, rom_joint=1)
        target = np.array([0.2, 0.5])
        out, (qmin, qmax), lims = apply_capability(
            cap, target, model, [0, 1], 1, np.random.default_rng(0))
        assert np.array_equal(out, target)
        assert np.array_equal(qmin, model.q_min)
        assert np.array_equal(qmax, model.q_max)
        assert np.array_equal(lims, model.torque_limit)

    def test_noise_span_is_fifteen_percent_of_range(self):
        # noise_norm 1 on a 2 rad range: uniform within +/-0.3 rad
        model = self.arm()
        cap = CapabilityVector(1.0, 0.0, 2.0, 1.0)
        rng = np.random.default_rng(5)
        deltas = []
        for _ in range(4000):
            out, _, _ = apply_capability(cap, np.zeros(2), model, [0], None,
                                         rng)
            deltas.append(out[0])
        deltas = np.array(deltas)
        span = 1.0 * 0.15 * 2.0
        assert np.abs(deltas).max() <= span
        assert np.abs(deltas).max() > span * 0.97
        assert abs(deltas.mean()) < span * 0.05

    def test_strength_scales_torque_limits(self):
        model = self.arm()
        cap = CapabilityVector(0.0, 0.0, 2.0, 0.5)
        _, _, lims = apply_capability(cap, np.zeros(2), model, [], 1,
                                      np.random.default_rng(0))
        assert np.allclose(lims, [20.0, 10.0])

    def test_noise_does_not_touch_given_target(self):
        model = self.arm()
        cap = CapabilityVector(1.0, 0.0, 2.0, 1.0)
        target = np.array([0.1, 0.2])
        out, _, _ = apply_capability(cap, target, model, [0, 1], None,
                                     np.random.default_rng(0))
        assert np.array_equal(target, [0.1, 0.2])
        assert not np.array_equal(out, target)


class TestSampleCapability:
    def arm(self):
        return two_link_arm()

    def test_none_kind(self):
        model = self.arm()
        cap = sample_capability(ImpairmentSpec("none"), model, 1,
                                np.random.default_rng(0))
        assert cap == fully_capable(model, 1)

    def test_weakness_distribution(self):
        # U[0.1, 0.6]: empirical bounds and mean 0.35 +/- 0.01
        model = self.arm()
        rng = np.random.default_rng(11)
        spec = ImpairmentSpec("weakness", weakness_range=(0.1, 0.6))
        vals = np.array([sample_capability(spec, model, 1, rng).strength_scale
                         for _ in range(100000)])
        assert vals.min() >= 0.1 and vals.max() <= 0.6
        assert abs(vals.mean() - 0.35) < 0.01

    def test_limited_rom_point_range(self):
        model = self.arm()
        spec = ImpairmentSpec("limited-rom", rom_min_range=(0.8, 0.8),
                              rom_max_range=(0.8, 0.8))
        cap = sample_capability(spec, model, 1, np.random.default_rng(1))
        assert cap.j_min_sample == 0.8 and cap.j_max_sample == 0.8

    def test_dyskinesia_normalized(self):
        model = self.arm()
        rng = np.random.default_rng(2)
        spec = ImpairmentSpec("dyskinesia", noise_fraction_max=0.15)
        vals = [sample_capability(spec, model, 1, rng).noise_norm
                for _ in range(1000)]
        assert min(vals) >= 0.0 and max(vals) <= 1.0

    def test_invariants_over_many_seeds(self):
        model = self.arm()
        rng = np.random.default_rng(123)
        for kind in ("none", "dyskinesia", "weakness", "limited-rom"):
            spec = ImpairmentSpec(kind)
            for _ in range(2000):
                cap = sample_capability(spec, model, 1, rng)
                assert 0.0 <= cap.noise_norm <= 1.0
                assert 0.0 < cap.strength_scale <= 1.0
                assert cap.j_min_sample <= cap.j_max_sample

    def test_inverted_range_rejected(self):
        with pytest.raises(ConfigError):
            ImpairmentSpec("weakness", weakness_range=(0.6, 0.1))


class TestClosestPoint:
    def capsules(self):
        return Capsules(np.array([[0.0, 0.0, 0.0]]),
                        np.array([[1.0, 0.0, 0.0]]),
                        np.array([0.05]), np.array([0], dtype=np.int64))

    def test_point_on_axis_inside(self):
        _, d = closest_point_on_body(self.capsules(), np.array([0.5, 0, 0]))
        assert d == 0.0

    def test_perpendicular_distance(self):
        pt, d = closest_point_on_body(self.capsules(),
                                      np.array([0.5, 0.2, 0.0]))
        assert abs(d - 0.15) < 1e-12
        assert np.allclose(pt, [0.5, 0.05, 0.0], atol=1e-12)

    def test_against_dense_sampling_oracle(self):
        # a capsule is the union of spheres along its axis: sampling 1e4 axis
        # points per capsule and taking exact sphere distances converges to
        # the capsule distance
        rng = np.random.default_rng(9)
        caps = Capsules(rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 3)),
                        rng.uniform(0.03, 0.12, 3),
                        np.arange(3, dtype=np.int64))
        t = np.linspace(0.0, 1.0, 10000)[:, None]
        axis_pts = [caps.a[j] + t * (caps.b[j] - caps.a[j]) for j in range(3)]
        for _ in range(40):
            p = rng.uniform(-1.5, 1.5, 3)
            _, d = closest_point_on_body(caps, p)
            d_oracle = min(
                max(np.linalg.norm(axis_pts[j] - p, axis=1).min() - caps.r[j],
                    0.0)
                for j in range(3))
            assert abs(d - d_oracle) < 2e-3
