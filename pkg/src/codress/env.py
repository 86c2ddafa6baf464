"""Episode state machine for the assisted-dressing task.

Reset samples a grip pose inside the configured box, places the robot there
with closed-form IK, samples the human capability, lays the sleeve out from
the gripper pointing away from the human and settles it.  Each policy step
applies the action as a clamped-then-scaled PD-target delta, runs the body
and garment substeps, and evaluates sensors and the joint reward on the
post-substep state.  Episodes always run to the horizon; success is latched
when limb progress first passes the threshold.

Coordinates: z up, the human stands at the origin facing +x, the robot base
sits in front-right of the human.  The human's right arm is the active limb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .body import (CapabilityVector, Capsules, ChainModel, ChainState,
                   ImpairmentSpec, JointSpec, Link, apply_capability,
                   forward_kinematics, sample_capability, step_pd)
from .errors import ConfigError, NumericError
from .garment import (ProgressReport, SleeveModel, aggregate_force_on_human,
                      Contact, contact_records, deformation,
                      geodesic_distance, limb_progress,
                      per_link_force_magnitudes, progress_and_geodesic,
                      settle, step_garment, straight_state)
from .kernels import rigid_contacts
from .reward import RewardBreakdown, RewardWeights, compute_reward
from .sensors import (AblationFlags, LayoutDims, ObservationLayout,
                      build_observation_human, build_observation_robot,
                      capacitive_grid, capacitive_reading,
                      force_torque_reading, human_layout, robot_layout)


def _rot_y(theta):
    c, s = math.cos(theta), math.sin(theta)
    return ((c, 0.0, s), (0.0, 1.0, 0.0), (-s, 0.0, c))


def _rot_z(theta):
    c, s = math.cos(theta), math.sin(theta)
    return ((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0))


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


@dataclass(frozen=True)
class GeometryConfig:
    """Chain geometry, gains and limits; every field is config-overridable."""

    # human: fixed torso capsule plus a 4-DOF right arm
    torso_base: tuple = (0.0, 0.0, 0.10)
    torso_top: tuple = (0.0, 0.0, 0.62)
    torso_radius: float = 0.14
    shoulder: tuple = (0.0, -0.22, 0.55)
    upper_arm_length: float = 0.28
    upper_arm_radius: float = 0.045
    forearm_length: float = 0.30
    forearm_radius: float = 0.04
    human_rest: tuple = (1.1, 0.25, 0.0, 0.35)
    human_kp: float = 100.0
    human_kd: float = 20.0
    shoulder_torque: float = 30.0
    elbow_torque: float = 20.0
    shoulder_pitch_range: tuple = (-0.8, 2.8)
    shoulder_abduct_range: tuple = (-0.5, 1.8)
    shoulder_twist_range: tuple = (-1.6, 1.6)
    elbow_range: tuple = (0.0, 2.5)
    # robot: 6-DOF arm from a fixed base, cylindrical gripping tool
    robot_base: tuple = (1.15, -0.60, 0.0)
    robot_column: float = 0.20
    robot_neck: float = 0.05
    robot_l1: float = 0.42
    robot_l2: float = 0.38
    robot_l3: float = 0.06
    robot_l4: float = 0.06
    robot_l5: float = 0.05
    tool_length: float = 0.12
    tool_radius: float = 0.03
    robot_kp: float = 100.0
    robot_kd: float = 20.0
    robot_torque: float = 60.0


class HumanModel:
    """Torso capsule plus the active-arm chain and impairment wiring."""

    def __init__(self, geom: GeometryConfig):
        g = geom
        joint = lambda axis, rng, tau: JointSpec(axis, rng[0], rng[1], tau,
                                                 g.human_kp, g.human_kd)
        links = [
            Link(-1, (0, 0, 0), joint((0, -1, 0), g.shoulder_pitch_range,
                                      g.shoulder_torque), 0.02, 0.03),
            Link(0, (0, 0, 0), joint((0, 0, -1), g.shoulder_abduct_range,
                                     g.shoulder_torque), 0.02, 0.03),
            Link(1, (0, 0, 0), joint((1, 0, 0), g.shoulder_twist_range,
                                     g.shoulder_torque), g.upper_arm_length,
                 g.upper_arm_radius),
            Link(2, (g.upper_arm_length, 0, 0), joint((0, -1, 0), g.elbow_range,
                                                      g.elbow_torque),
                 g.forearm_length, g.forearm_radius),
        ]
        self.chain = ChainModel(links, base_pos=g.shoulder,
                                base_rot=_rot_y(math.pi / 2),
                                q_rest=np.asarray(g.human_rest, dtype=float))
        self.torso = (np.asarray(g.torso_base, dtype=float),
                      np.asarray(g.torso_top, dtype=float), g.torso_radius)
        self.rom_joint = 3          # elbow carries the limited-ROM variation
        self.noise_joints = np.arange(4)  # dyskinesia affects the whole arm
        # torso link index 0; chain links 1..4; rest groups: right arm
        self.n_links = 1 + self.chain.n_joints
        self.group_map = np.full(self.chain.n_joints, 4, dtype=np.int64)

    def capsules(self, fk) -> Capsules:
        a, b, r = fk.capsules()
        containable = np.ones(self.n_links, dtype=np.uint8)
        containable[0] = 0  # the torso is an obstacle, not a dressable limb
        return Capsules(
            np.concatenate([self.torso[0][None], a]),
            np.concatenate([self.torso[1][None], b]),
            np.concatenate([[self.torso[2]], r]),
            np.arange(self.n_links, dtype=np.int64), containable)


class RobotModel:
    """6-DOF arm; the tool capsule extends past the wrist-mounted sensor."""

    def __init__(self, geom: GeometryConfig):
        g = geom
        tau = g.robot_torque
        joint = lambda axis, lo, hi: JointSpec(axis, lo, hi, tau, g.robot_kp,
                                               g.robot_kd)
        links = [
            Link(-1, (0, 0, g.robot_column), joint((0, 0, 1), -math.pi, math.pi),
                 0.05, 0.04),
            Link(0, (0, 0, g.robot_neck), joint((0, -1, 0), -1.4, 1.6),
                 g.robot_l1, 0.045),
            Link(1, (g.robot_l1, 0, 0), joint((0, -1, 0), -2.7, 2.7),
                 g.robot_l2, 0.04),
            Link(2, (g.robot_l2, 0, 0), joint((1, 0, 0), -2.9, 2.9),
                 g.robot_l3, 0.035),
            Link(3, (g.robot_l3, 0, 0), joint((0, -1, 0), -2.2, 2.2),
                 g.robot_l4, 0.035),
            Link(4, (g.robot_l4, 0, 0), joint((1, 0, 0), -2.9, 2.9),
                 g.robot_l5, 0.03),
        ]
        self.chain = ChainModel(links, base_pos=np.asarray(g.robot_base, float),
                                base_rot=_rot_z(math.pi))
        self.tool_length = g.tool_length
        self.tool_radius = g.tool_radius
        self.geom = geom
        # planar 2-link lengths for IK: upper arm, forearm through the roll
        self._ik_a = g.robot_l1
        self._ik_b = g.robot_l2 + g.robot_l3
        self._wrist_extent = g.robot_l4 + g.robot_l5 + g.tool_length
        self._shoulder = (np.asarray(g.robot_base, float)
                          + np.array([0.0, 0.0, g.robot_column + g.robot_neck]))

    def ee(self, fk):
        """(grip point, tool rotation, sensor origin, tool capsule a/b)."""
        rot = fk.rot[5]
        sensor = fk.joint_pos[5]
        tool_a = fk.tip_pos[5]
        tool_b = tool_a + rot[:, 0] * self.tool_length
        return tool_b, rot, sensor, tool_a

    def ik(self, p_grip, d_tool):
        """Closed-form placement: tool tip at p_grip, tool axis along d_tool.

        Yaw aims the arm plane, a planar 2-link solve positions the wrist
        cluster, and the two wrist pitches/rolls orient the tool.  Returns
        joint angles or None when unreachable or outside the joint limits.
        """
        d = np.asarray(d_tool, float)
        d = d / np.linalg.norm(d)
        p_w = np.asarray(p_grip, float) - d * self._wrist_extent
        base_rot = self.chain.base_rot
        w = base_rot.T @ (p_w - self._shoulder)
        q0 = math.atan2(w[1], w[0])
        r = math.hypot(w[0], w[1])
        h = w[2]
        a, b = self._ik_a, self._ik_b
        d2 = r * r + h * h
        cos_el = (d2 - a * a - b * b) / (2 * a * b)
        if abs(cos_el) > 1.0:
            return None
        for beta in (-math.acos(cos_el), math.acos(cos_el)):
            alpha = math.atan2(h, r) - math.atan2(b * math.sin(beta),
                                                  a + b * math.cos(beta))
            q = np.array([q0, alpha, beta, 0.0, 0.0, 0.0])
            fk = forward_kinematics(self.chain, q)
            fore = fk.rot[3]
            e_hat = fore[:, 0]
            cross = np.cross(e_hat, d)
            n = np.linalg.norm(cross)
            if n < 1e-10:
                if np.dot(e_hat, d) < 0.0:
                    continue
                q3 = q4 = 0.0
            else:
                n_hat = cross / n
                n_local = fore.T @ n_hat
                q3 = math.atan2(-n_local[2], -n_local[1])
                q4 = math.atan2(n, float(np.dot(e_hat, d)))
            q[3], q[4] = q3, q4
            if np.any(q < self.chain.q_min) or np.any(q > self.chain.q_max):
                continue
            grip, _, _, _ = self.ee(forward_kinematics(self.chain, q))
            if np.linalg.norm(grip - np.asarray(p_grip, float)) < 1e-6:
                return q
        return None


def sample_grip_points(box_min, box_max, n_arms, separation, rng,
                       max_tries=1000):
    """Uniform grip points inside the box; two-arm draws respect the
    end-effector separation bounds by rejection."""
    lo = np.asarray(box_min, float)
    hi = np.asarray(box_max, float)
    if np.any(lo > hi):
        raise ConfigError("grip box is inverted")
    if n_arms == 1:
        return rng.uniform(lo, hi)[None, :]
    for _ in range(max_tries):
        pts = rng.uniform(lo, hi, size=(n_arms, 3))
        gap = np.linalg.norm(pts[0] - pts[1])
        if separation[0] < gap < separation[1]:
            return pts
    raise ConfigError("could not satisfy the end-effector separation bounds")


@dataclass(frozen=True)
class TaskConfig:
    task: str = "gown-one-arm"
    episode_steps: int = 150
    policy_rate_hz: float = 100.0
    physics_substeps: int = 4
    impairment: ImpairmentSpec = field(default_factory=ImpairmentSpec)
    action_scale: float = 1.0
    action_delta_limit: float = 0.04
    success_threshold_fraction: float = 0.6
    grip_box_min: tuple = (0.63, -0.49, 0.26)
    grip_box_max: tuple = (0.77, -0.31, 0.44)
    ee_separation: tuple = (0.1, 0.5)
    settle_duration: float = 0.5
    obs_scales: tuple = ()  # (name, scale) pairs; tuple keeps the config hashable
    sleeve: SleeveModel = field(default_factory=SleeveModel)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    rigid_contact_stiffness: float = 3000.0
    deformation_slack: float = 1.05
    grip_offset: float | None = None  # cuff center offset from the tool tip;
                                      # defaults to the tube radius (the
                                      # gripper pinches the cuff wall)

    def __post_init__(self):
        if self.task not in ("gown-one-arm", "gown-two-arms"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.episode_steps < 1 or self.physics_substeps < 1:
            raise ConfigError("episode_steps and physics_substeps must be >= 1")
        if not self.ee_separation[0] < self.ee_separation[1]:
            raise ConfigError("ee_separation bounds inverted")

    @property
    def n_arms(self) -> int:
        return 2 if self.task == "gown-two-arms" else 1

    @property
    def policy_dt(self) -> float:
        return 1.0 / self.policy_rate_hz

    @property
    def substep_dt(self) -> float:
        return self.policy_dt / self.physics_substeps


@dataclass
class EpisodeResult:
    success: bool
    time_to_success: float | None
    max_force: float
    mean_deformation: float
    final_progress: float
    episode_return: float = 0.0


class DressEnv:
    """One-arm gown dressing; instances share nothing and are worker-safe."""

    def __init__(self, cfg: TaskConfig, weights: RewardWeights,
                 penalty_form: str = "eq2", force_ref: float = 50.0,
                 flags: AblationFlags = AblationFlags()):
        if cfg.task != "gown-one-arm":
            raise ConfigError(
                f"task {cfg.task!r} is a configuration stub; only gown-one-arm "
                "builds an environment")
        self.cfg = cfg
        self.weights = weights
        self.penalty_form = penalty_form
        self.force_ref = force_ref
        self.flags = flags
        self.human = HumanModel(cfg.geometry)
        self.robot = RobotModel(cfg.geometry)
        self.sleeve_model = cfg.sleeve
        self.grip_offset = (cfg.sleeve.tube_radius if cfg.grip_offset is None
                            else cfg.grip_offset)
        self.threshold = (cfg.success_threshold_fraction
                          * self.sleeve_model.rest_length_total)
        scales = dict(cfg.obs_scales)
        self.dims = LayoutDims(
            n_human_dof=self.human.chain.n_joints,
            n_robot_dof=self.robot.chain.n_joints,
            n_human_links=self.human.n_links,
            n_human_points=self.human.chain.n_joints + 1,
            n_robot_points=self.robot.chain.n_joints + 1,
            n_arms=cfg.n_arms)
        self.human_obs = human_layout(self.dims, scales)
        self.robot_obs = robot_layout(self.dims, flags, scales)
        self.obs_dim = self.human_obs.size + self.robot_obs.size
        self.act_dim = self.human.chain.n_joints + self.robot.chain.n_joints
        self._rng = None
        self._done = True

    # -- episode lifecycle -------------------------------------------------

    def reset(self, rng) -> np.ndarray:
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self._rng = rng
        cfg = self.cfg
        self.capability = sample_capability(cfg.impairment, self.human.chain,
                                            self.human.rom_joint, rng)
        q_min = self.human.chain.q_min.copy()
        q_max = self.human.chain.q_max.copy()
        q_min[self.human.rom_joint] = self.capability.j_min_sample
        q_max[self.human.rom_joint] = self.capability.j_max_sample
        self.cap_limits = (q_min, q_max)
        self.cap_torque = (self.human.chain.torque_limit
                           * self.capability.strength_scale)
        q0 = np.clip(self.human.chain.q_rest, q_min, q_max)
        self.human_state = ChainState(q0.copy(),
                                      np.zeros(self.human.chain.n_joints))
        self.human_fk = forward_kinematics(self.human.chain, self.human_state.q)

        robot_q = None
        for _ in range(100):
            grip = sample_grip_points(cfg.grip_box_min, cfg.grip_box_max, 1,
                                      cfg.ee_separation, rng)[0]
            d_tool = np.asarray(cfg.geometry.shoulder, float) - grip
            robot_q = self.robot.ik(grip, d_tool)
            if robot_q is not None:
                break
        if robot_q is None:
            raise ConfigError("sampled grip pose unreachable after 100 tries")
        self.robot_state = ChainState(robot_q.copy(),
                                      np.zeros(self.robot.chain.n_joints))
        self.robot_fk = forward_kinematics(self.robot.chain, self.robot_state.q)
        cuff, away = self._cuff(self.robot_fk)

        # sleeve trails away from the human, opening clamped at the cuff
        state = straight_state(self.sleeve_model, cuff, away)
        self.sleeve = settle(self.sleeve_model, state, cuff,
                             cfg.settle_duration, cfg.substep_dt,
                             grip_axis=away)
        self._prev_grip = cuff.copy()
        self._prev_grip2 = cuff + away * self.sleeve_model.rest_segment_length

        self.human_target = q0.copy()
        self.robot_target = robot_q.copy()
        self._caps = self.human.capsules(self.human_fk)
        self.sleeve.contacts = contact_records(self.sleeve_model, self.sleeve,
                                               self._caps)
        self.rigid = self._rigid_contacts()
        self._ft = np.zeros(6)
        self.step_count = 0
        self.success = False
        self.time_to_success = None
        self._force_peak = 0.0
        self._stretch_sum = 0.0
        self._done = False

        report = self._report()
        self.d0 = report.geodesic
        self._last_report = report
        return self._observe(report)

    def step(self, joint_action, action_scale=None):
        if self._done:
            raise RuntimeError("episode is done; call reset")
        action = np.asarray(joint_action, dtype=float)
        if action.shape != (self.act_dim,):
            raise ValueError(f"expected action of length {self.act_dim}")
        if not np.all(np.isfinite(action)):
            self._done = True
            raise NumericError("non-finite action")
        cfg = self.cfg
        scale = cfg.action_scale if action_scale is None else action_scale
        delta = scale * np.clip(action, -cfg.action_delta_limit,
                                cfg.action_delta_limit)
        nh = self.human.chain.n_joints
        self.human_target = np.clip(self.human_target + delta[:nh],
                                    self.cap_limits[0], self.cap_limits[1])
        actuated, _, _ = apply_capability(
            self.capability, self.human_target, self.human.chain,
            self.human.noise_joints, self.human.rom_joint, self._rng)
        self.robot_target = np.clip(self.robot_target + delta[nh:],
                                    self.robot.chain.q_min,
                                    self.robot.chain.q_max)

        dt = cfg.substep_dt
        wrench = np.zeros(6)
        for _ in range(cfg.physics_substeps):
            self.human_state, _ = step_pd(self.human.chain, self.human_state,
                                          actuated, self.cap_torque, dt,
                                          joint_limits=self.cap_limits)
            self.robot_state, _ = step_pd(self.robot.chain, self.robot_state,
                                          self.robot_target,
                                          self.robot.chain.torque_limit, dt)
            self.human_fk = forward_kinematics(self.human.chain,
                                               self.human_state.q)
            self.robot_fk = forward_kinematics(self.robot.chain,
                                               self.robot_state.q)
            cuff, away = self._cuff(self.robot_fk)
            grip2 = cuff + away * self.sleeve_model.rest_segment_length
            grip_vel = (cuff - self._prev_grip) / dt
            grip_vel2 = (grip2 - self._prev_grip2) / dt
            self._caps = self.human.capsules(self.human_fk)
            self.sleeve, wrench = step_garment(self.sleeve_model, self.sleeve,
                                               cuff, self._caps, dt,
                                               grip_vel=grip_vel,
                                               grip_axis=away,
                                               grip_vel2=grip_vel2,
                                               records=False)
            self._prev_grip = cuff
            self._prev_grip2 = grip2

        self.sleeve.contacts = contact_records(self.sleeve_model, self.sleeve,
                                               self._caps)
        self.rigid = self._rigid_contacts()
        report = self._report()
        self._ft = self._force_torque(wrench)
        breakdown = compute_reward(
            report.progress, report.max_stretch, report.geodesic, self.d0,
            report.f_max, self.human_state.q, self.human.chain.q_rest,
            self.human.group_map, self.weights, self.penalty_form,
            self.force_ref, cfg.deformation_slack)

        self.step_count += 1
        if report.progress >= 1.0 and not self.success:
            self.success = True
            self.time_to_success = self.step_count * cfg.policy_dt
        self._force_peak = max(self._force_peak, report.f_max)
        self._stretch_sum += report.max_stretch
        self._done = self.step_count >= cfg.episode_steps
        self._last_report = report
        return self._observe(report), breakdown, self._done, report

    def result(self, episode_return=0.0) -> EpisodeResult:
        steps = max(self.step_count, 1)
        return EpisodeResult(self.success, self.time_to_success,
                             self._force_peak, self._stretch_sum / steps,
                             self._last_report.progress, episode_return)

    # -- internals ---------------------------------------------------------

    def _cuff(self, robot_fk):
        """Cuff-center pin point and the tube trailing direction.

        The gripper pinches the top of the cuff ring, so the opening center
        hangs one grip offset below the tool tip (world frame); the opening
        axis follows the tool axis."""
        tool_tip, ee_rot, _, _ = self.robot.ee(robot_fk)
        cuff = tool_tip - np.array([0.0, 0.0, self.grip_offset])
        return cuff, -ee_rot[:, 0]

    def _rigid_contacts(self):
        tool_b, _, _, tool_a = self.robot.ee(self.robot_fk)
        caps = self._caps
        m = len(caps)
        f = np.zeros((m, 3))
        pt = np.zeros((m, 3))
        link = np.zeros(m, dtype=np.int64)
        n = rigid_contacts(tool_a, tool_b, self.robot.tool_radius, caps.a,
                           caps.b, caps.r, caps.link,
                           self.cfg.rigid_contact_stiffness, f, pt, link)
        return [Contact(int(link[i]), f[i].copy(), pt[i].copy())
                for i in range(n)]

    def _all_contacts(self):
        return list(self.sleeve.contacts) + self.rigid

    def _report(self) -> ProgressReport:
        tip = self.human_fk.tip
        progress, geo = progress_and_geodesic(self.sleeve_model, self.sleeve,
                                              tip, self.threshold)
        stretch = deformation(self.sleeve_model, self.sleeve)
        f_max = aggregate_force_on_human(self._all_contacts(),
                                         self.human.n_links)
        return ProgressReport(progress, geo, stretch, f_max)

    def _force_torque(self, grip_wrench):
        _, ee_rot, sensor, _ = self.robot.ee(self.robot_fk)
        cuff, _ = self._cuff(self.robot_fk)
        f = grip_wrench[:3]
        world = np.concatenate([f, _cross(cuff - sensor, f)
                                + grip_wrench[3:]])
        contact_wrenches = []
        for c in self.rigid:
            rf = -c.force  # reaction on the tool
            contact_wrenches.append(np.concatenate(
                [rf, _cross(c.point - sensor, rf)]))
        return force_torque_reading(world, contact_wrenches, ee_rot)

    def _observe(self, report: ProgressReport) -> np.ndarray:
        hfk, rfk = self.human_fk, self.robot_fk
        contacts = self._all_contacts()
        hand_rot = hfk.rot[-1]
        tip = hfk.tip
        opening = self.sleeve.positions[0]
        seg = self.sleeve.positions[1] - opening
        axis = seg / np.linalg.norm(seg)
        garment_feat = np.concatenate([hand_rot.T @ (opening - tip),
                                       hand_rot.T @ axis])
        jp = np.concatenate([hfk.joint_pos.ravel(), hfk.tip.ravel(),
                             rfk.joint_pos.ravel(), rfk.tip.ravel()])
        human_values = {
            "q": self.human_state.q,
            "qdot": self.human_state.qdot,
            "haptics": per_link_force_magnitudes(contacts, self.human.n_links),
            "garment": garment_feat,
            "task": np.array([self.threshold, report.progress]),
            "joint_positions": jp,
            "target_prev": self.human_target,
            "capability": self.capability.as_array(),
        }
        grip_pos, ee_rot, _, _ = self.robot.ee(rfk)
        robot_values = {
            "q_0": self.robot_state.q,
            "qdot_0": self.robot_state.qdot,
            "force_torque_0": self._ft,
            "robot_joint_positions_0": np.concatenate(
                [rfk.joint_pos.ravel(), rfk.tip.ravel()]),
            "target_prev_0": self.robot_target,
        }
        if self.robot_obs.has("capacitive_0"):
            grid = capacitive_grid(ee_rot, grip_pos)
            robot_values["capacitive_0"] = capacitive_reading(grid, self._caps)
        if self.robot_obs.has("human_joint_positions"):
            robot_values["human_joint_positions"] = np.concatenate(
                [hfk.joint_pos.ravel(), hfk.tip.ravel()])
        o_h = build_observation_human(human_values, self.human_obs)
        o_r = build_observation_robot(robot_values, self.robot_obs)
        return np.concatenate([o_h, o_r])
