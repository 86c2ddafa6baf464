"""Reward terms, weight presets, and the weighted total."""

import numpy as np
import pytest

from codress.errors import ConfigError
from codress.reward import (RewardWeights, WEIGHT_PRESETS, deformation_penalty,
                            geodesic_reward, linear_force_penalty,
                            perceived_force_penalty, progress_reward,
                            rest_pose_penalty, total_reward, weight_preset)


class TestPerceivedForcePenalty:
    def test_midpoint_is_half(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            w_mid = rng.uniform(1.0, 200.0)
            w_scale = rng.uniform(0.01, 2.0)
            assert abs(perceived_force_penalty(w_mid, w_mid, w_scale)
                       + 0.5) < 1e-12

    def test_two_over_scale_point(self):
        # f = w_mid + 2/w_scale gives -tanh(2)/2 - 1/2
        val = perceived_force_penalty(30.0 + 2.0 / 0.1, 30.0, 0.1)
        assert val == pytest.approx(-np.tanh(2.0) / 2 - 0.5, abs=1e-12)
        assert val == pytest.approx(-0.9819903, abs=1e-6)

    def test_asymptote(self):
        assert perceived_force_penalty(1e6, 30.0, 0.1) < -0.999

    def test_strictly_decreasing_and_bounded(self):
        f = np.linspace(0.0, 500.0, 10000)
        vals = np.array([perceived_force_penalty(x, 30.0, 0.1) for x in f])
        assert np.all(np.diff(vals) < 0.0)
        assert np.all(vals > -1.0) and np.all(vals < 0.0)


class TestProgressReward:
    def test_linear_region(self):
        assert progress_reward(0.4) == pytest.approx(0.4)

    def test_bonus_at_threshold(self):
        assert progress_reward(1.0) == pytest.approx(2.0)

    def test_capped_beyond(self):
        assert progress_reward(1.3) == pytest.approx(2.0)

    def test_multi_limb_mean(self):
        assert progress_reward([1.0, 0.5]) == pytest.approx((2.0 + 0.5) / 2)

    def test_monotone_with_unit_jump(self):
        xs = np.linspace(-1.0, 1.5, 1001)
        vals = np.array([progress_reward(x) for x in xs])
        assert np.all(np.diff(vals) >= -1e-12)
        below = progress_reward(1.0 - 1e-9)
        assert progress_reward(1.0) - below == pytest.approx(1.0, abs=1e-6)


class TestDeformationPenalty:
    def test_slack_region(self):
        assert deformation_penalty(1.0) == 0.0

    def test_linear(self):
        assert deformation_penalty(1.25, slack=1.05) == pytest.approx(-0.2)

    def test_boundary(self):
        assert deformation_penalty(1.05, slack=1.05) == 0.0


class TestGeodesicReward:
    def test_at_start_distance(self):
        assert geodesic_reward(0.4, 0.4) == 0.0

    def test_at_opening(self):
        assert geodesic_reward(0.0, 0.4) == 1.0

    def test_halfway(self):
        assert geodesic_reward(0.2, 0.4) == pytest.approx(0.5)

    def test_zero_start(self):
        assert geodesic_reward(0.0, 0.0) == 1.0


class TestRestPosePenalty:
    def test_zero_at_rest(self):
        q = np.array([0.1, 0.2, 0.3, 0.4])
        total, vec = rest_pose_penalty(q, q, [4, 4, 4, 4],
                                       (40, 4, 8, 4, 0.5))
        assert total == 0.0 and np.all(vec == 0.0)

    def test_single_dof_deviation(self):
        # one right-arm DOF off by 0.5 rad in a 4-DOF group, weight 0.5:
        # contribution 0.5 * (-0.25 / 4)
        q = np.array([0.5, 0.0, 0.0, 0.0])
        total, vec = rest_pose_penalty(q, np.zeros(4), [4, 4, 4, 4],
                                       (40, 4, 8, 4, 0.5))
        assert vec[4] == pytest.approx(-0.25 / 4)
        assert total == pytest.approx(0.5 * (-0.25 / 4))
        assert total == pytest.approx(-0.03125)

    def test_quadratic_scaling(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=6)
        gm = rng.integers(0, 5, 6)
        _, v1 = rest_pose_penalty(q, np.zeros(6), gm, np.ones(5))
        _, v2 = rest_pose_penalty(2 * q, np.zeros(6), gm, np.ones(5))
        assert np.allclose(v2, 4 * v1)

    def test_unassigned_dof_rejected(self):
        with pytest.raises(ConfigError):
            rest_pose_penalty(np.zeros(3), np.zeros(3), [0, 9, 1],
                              np.ones(5))
        with pytest.raises(ConfigError):
            rest_pose_penalty(np.zeros(3), np.zeros(3), [0, 1],
                              np.ones(5))


class TestPresets:
    def test_table_values(self):
        one = WEIGHT_PRESETS["gown-one-arm"]
        assert (one.w1, one.w2, one.w3, one.w4) == (40.0, 5.0, 0.0, 5.0)
        assert one.w5 == (40.0, 4.0, 8.0, 4.0, 0.5)
        two = WEIGHT_PRESETS["gown-two-arms"]
        assert (two.w1, two.w2, two.w3, two.w4) == (40.0, 5.0, 0.0, 5.0)
        assert two.w5 == (45.0, 5.0, 4.0, 0.25, 0.25)
        tee = WEIGHT_PRESETS["tshirt"]
        assert (tee.w1, tee.w2, tee.w3, tee.w4) == (20.0, 5.0, 15.0, 5.0)
        assert tee.w5 == (40.0, 5.0, 4.0, 0.0, 0.0)

    def test_preset_override(self):
        w = weight_preset("gown-one-arm", w4=40.0)
        assert w.w4 == 40.0 and w.w1 == 40.0

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            weight_preset("tuxedo")

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            RewardWeights(-1.0, 0, 0, 0, (0, 0, 0, 0, 0))


class TestTotalReward:
    def test_progress_contribution_at_threshold(self):
        w = weight_preset("gown-one-arm")
        bd = total_reward(progress_reward(1.0), 0.0, 0.0, 0.0, np.zeros(5), w)
        assert bd.total == pytest.approx(40.0 * 2.0)

    def test_all_zero(self):
        w = weight_preset("gown-one-arm")
        bd = total_reward(0.0, 0.0, 0.0, 0.0, np.zeros(5), w)
        assert bd.total == 0.0

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            w = RewardWeights(*rng.uniform(0, 10, 4),
                              tuple(rng.uniform(0, 10, 5)))
            r_p, r_d, r_g, r_c = rng.normal(size=4)
            r_r = rng.normal(size=5)
            bd = total_reward(r_p, r_d, r_g, r_c, r_r, w)
            oracle = float(np.dot(
                np.array([w.w1, w.w2, w.w3, w.w4, *w.w5]),
                np.array([r_p, r_d, r_g, r_c, *r_r])))
            assert abs(bd.total - oracle) < 1e-12

    def test_linear_in_each_weight(self):
        base = weight_preset("gown-one-arm")
        from dataclasses import replace
        comps = dict(r_p=0.7, r_d=-0.3, r_g=0.2, r_c=-0.6, r_r=-0.1 * np.ones(5))
        t1 = total_reward(**comps, weights=base).total
        t2 = total_reward(**comps, weights=replace(base, w1=base.w1 + 2)).total
        assert t2 - t1 == pytest.approx(2 * comps["r_p"])

    def test_homogeneous_in_weights(self):
        base = weight_preset("gown-one-arm")
        scaled = RewardWeights(base.w1 * 3, base.w2 * 3, base.w3 * 3,
                               base.w4 * 3, tuple(3 * v for v in base.w5))
        comps = (0.4, -0.2, 0.1, -0.5, np.array([0, 0, 0, 0, -0.2]))
        assert total_reward(*comps, scaled).total == pytest.approx(
            3 * total_reward(*comps, base).total)

    def test_linear_penalty_form(self):
        assert linear_force_penalty(25.0, 50.0) == pytest.approx(-0.5)
        assert linear_force_penalty(50.0, 50.0) == pytest.approx(-1.0)
