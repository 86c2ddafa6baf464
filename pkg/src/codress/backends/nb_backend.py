"""Loop-style hot kernels, JIT-compiled with numba when available.

Every function here is written in the numba nopython subset (explicit loops,
preallocated outputs, float64 arrays).  When numba is installed and enabled
the module exports compiled versions; otherwise the same functions run as
plain Python, which is slow but bit-compatible.  The vectorized twin of this
module lives in ``np_backend``; ``codress.kernels`` picks one at import time.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = os.environ.get("CODRESS_BACKEND", "numba").lower() != "numpy"
if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    def _jit(fn):
        return njit(cache=True, fastmath=False)(fn)
else:  # plain-Python fallback keeps identical semantics
    def _jit(fn):
        return fn


@_jit
def rotation_about_axis(axis, angle, out):
    """Rodrigues rotation matrix for a unit axis, written into ``out`` (3x3)."""
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    x, y, z = axis[0], axis[1], axis[2]
    out[0, 0] = t * x * x + c
    out[0, 1] = t * x * y - s * z
    out[0, 2] = t * x * z + s * y
    out[1, 0] = t * x * y + s * z
    out[1, 1] = t * y * y + c
    out[1, 2] = t * y * z - s * x
    out[2, 0] = t * x * z - s * y
    out[2, 1] = t * y * z + s * x
    out[2, 2] = t * z * z + c


@_jit
def fk_chain(parent, off_pos, off_rot, axis, link_len, base_rot, base_pos, q):
    """Forward kinematics of a serial/tree chain.

    Frame of joint i: R_i = R_parent @ off_rot_i @ Rot(axis_i, q_i), origin at
    p_i = p_parent + R_parent @ off_pos_i.  Link i extends from p_i along the
    local +x axis by link_len[i].

    Returns (rot (n,3,3), joint_pos (n,3), tip_pos (n,3)).
    """
    n = q.shape[0]
    rot = np.empty((n, 3, 3))
    jpos = np.empty((n, 3))
    tip = np.empty((n, 3))
    jr = np.empty((3, 3))
    tmp = np.empty((3, 3))
    for i in range(n):
        p = parent[i]
        if p < 0:
            pr = base_rot
            pp = base_pos
        else:
            pr = rot[p]
            pp = jpos[p]
        for r in range(3):
            acc = 0.0
            for k in range(3):
                acc += pr[r, k] * off_pos[i, k]
            jpos[i, r] = pp[r] + acc
        # tmp = pr @ off_rot[i]
        for r in range(3):
            for cc in range(3):
                acc = 0.0
                for k in range(3):
                    acc += pr[r, k] * off_rot[i, k, cc]
                tmp[r, cc] = acc
        rotation_about_axis(axis[i], q[i], jr)
        for r in range(3):
            for cc in range(3):
                acc = 0.0
                for k in range(3):
                    acc += tmp[r, k] * jr[k, cc]
                rot[i, r, cc] = acc
        for r in range(3):
            tip[i, r] = jpos[i, r] + rot[i, r, 0] * link_len[i]
    return rot, jpos, tip


@_jit
def pd_step(q, qdot, target, prop, kp, kd, damping, tau_lim, q_min, q_max,
            dt, n_sub):
    """Exact-propagation PD step with torque clamping and joint limits.

    ``prop`` is the (n,2,2) per-joint propagator of the linear closed-loop
    system over one substep (see body.pd_propagator).  The actuator torque is
    evaluated at the substep start; if it exceeds the limit the substep
    integrates the constant clamped torque against passive damping instead.
    Joint limits are enforced by clamping q and zeroing outward velocity.

    Returns (q_out, qdot_out, tau_applied) with tau from the last substep.
    """
    n = q.shape[0]
    q_out = q.copy()
    qd_out = qdot.copy()
    tau_out = np.zeros(n)
    for _ in range(n_sub):
        for i in range(n):
            e = target[i] - q_out[i]
            tau_raw = kp[i] * e - kd[i] * qd_out[i]
            lim = tau_lim[i]
            if tau_raw > lim or tau_raw < -lim:
                # saturated: integrate the constant clamped torque against
                # passive damping only
                tau = lim if tau_raw > lim else -lim
                c = damping[i]
                if c > 1e-12:
                    decay = np.exp(-c * dt)
                    v_inf = tau / c
                    qn = q_out[i] + v_inf * dt + (qd_out[i] - v_inf) * (1.0 - decay) / c
                    vn = v_inf + (qd_out[i] - v_inf) * decay
                else:
                    qn = q_out[i] + qd_out[i] * dt + 0.5 * tau * dt * dt
                    vn = qd_out[i] + tau * dt
            else:
                tau = tau_raw
                dq = q_out[i] - target[i]
                qn = target[i] + prop[i, 0, 0] * dq + prop[i, 0, 1] * qd_out[i]
                vn = prop[i, 1, 0] * dq + prop[i, 1, 1] * qd_out[i]
            tau_out[i] = tau
            if qn < q_min[i]:
                qn = q_min[i]
                if vn < 0.0:
                    vn = 0.0
            elif qn > q_max[i]:
                qn = q_max[i]
                if vn > 0.0:
                    vn = 0.0
            q_out[i] = qn
            qd_out[i] = vn
    return q_out, qd_out, tau_out


@_jit
def point_body(point, cap_a, cap_b, cap_r):
    """Closest point on a union of capsules to ``point``.

    Returns (distance, surface_point (3,), capsule_index).  Distance is zero
    when the point lies inside a capsule.
    """
    m = cap_a.shape[0]
    best_d = 1e300
    best_idx = -1
    best_pt = np.zeros(3)
    for j in range(m):
        abx = cap_b[j, 0] - cap_a[j, 0]
        aby = cap_b[j, 1] - cap_a[j, 1]
        abz = cap_b[j, 2] - cap_a[j, 2]
        apx = point[0] - cap_a[j, 0]
        apy = point[1] - cap_a[j, 1]
        apz = point[2] - cap_a[j, 2]
        denom = abx * abx + aby * aby + abz * abz
        if denom > 1e-18:
            t = (apx * abx + apy * aby + apz * abz) / denom
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        else:
            t = 0.0
        cx = cap_a[j, 0] + t * abx
        cy = cap_a[j, 1] + t * aby
        cz = cap_a[j, 2] + t * abz
        dx = point[0] - cx
        dy = point[1] - cy
        dz = point[2] - cz
        axial = np.sqrt(dx * dx + dy * dy + dz * dz)
        d = axial - cap_r[j]
        if d < 0.0:
            d = 0.0
        if d < best_d:
            best_d = d
            best_idx = j
            if axial > 1e-12:
                scale = cap_r[j] / axial
                best_pt[0] = cx + dx * scale
                best_pt[1] = cy + dy * scale
                best_pt[2] = cz + dz * scale
            else:
                best_pt[0] = cx + cap_r[j]
                best_pt[1] = cy
                best_pt[2] = cz
    return best_d, best_pt, best_idx


@_jit
def points_body_distance(points, cap_a, cap_b, cap_r, out):
    """Clipped-free distances from several points to a capsule set."""
    for i in range(points.shape[0]):
        d, _, _ = point_body(points[i], cap_a, cap_b, cap_r)
        out[i] = d


@_jit
def seg_seg_closest(p0, p1, q0, q1):
    """Closest points between segments [p0,p1] and [q0,q1].

    Returns (s, t, dist) with s, t in [0,1].
    """
    ux = p1[0] - p0[0]
    uy = p1[1] - p0[1]
    uz = p1[2] - p0[2]
    vx = q1[0] - q0[0]
    vy = q1[1] - q0[1]
    vz = q1[2] - q0[2]
    wx = p0[0] - q0[0]
    wy = p0[1] - q0[1]
    wz = p0[2] - q0[2]
    a = ux * ux + uy * uy + uz * uz
    b = ux * vx + uy * vy + uz * vz
    c = vx * vx + vy * vy + vz * vz
    d = ux * wx + uy * wy + uz * wz
    e = vx * wx + vy * wy + vz * wz
    den = a * c - b * b
    if den > 1e-14:
        s = (b * e - c * d) / den
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    else:
        s = 0.0
    if c > 1e-14:
        t = (b * s + e) / c
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    else:
        t = 0.0
    # re-project s for the clamped t
    if a > 1e-14:
        s = (b * t - d) / a
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    dx = (p0[0] + s * ux) - (q0[0] + t * vx)
    dy = (p0[1] + s * uy) - (q0[1] + t * vy)
    dz = (p0[2] + s * uz) - (q0[2] + t * vz)
    return s, t, np.sqrt(dx * dx + dy * dy + dz * dz)


@_jit
def garment_contacts(pos, contained, update_contained, mouth_segments, cap_a,
                     cap_b, cap_r, cap_link, cap_containable, tube_radius,
                     k_contact, out_force, out_point, out_link, out_seg,
                     out_sparam):
    """Penalty contacts between the tube and a set of human capsules.

    A 1-D centerline cannot represent topological containment, so each
    (segment, capsule) pair carries a containment flag with hysteresis:

    * contained pairs act as a ring around the capsule; displacement of the
      capsule axis beyond (tube_radius - cap_r) off the centerline presses
      the far wall and produces a centering force, so the sleeve stays on
      the limb (set when the capsule sits radially inside the bore, cleared
      when torn more than 2*cap_r past the wall);
    * uncontained containable capsules (limbs) feel no side contact: a limb
      is only engaged once it has entered through the mouth or next to an
      already-contained segment, where capture is tracked;
    * non-containable capsules (the torso) treat the tube as a solid rod of
      radius tube_radius, except at the open mouth (the first
      ``mouth_segments`` segments exert no side contact).

    All forces are proportional to penetration depth and act on the capsule;
    the caller applies their negations to the segment particles.  Forces are
    reported on the human side via the output arrays (sized
    n_segments*n_capsules); returns the active contact count.
    """
    n_seg = pos.shape[0] - 1
    m = cap_a.shape[0]
    count = 0
    for i in range(n_seg):
        for j in range(m):
            s, t, d = seg_seg_closest(pos[i], pos[i + 1], cap_a[j], cap_b[j])
            idx = i * m + j
            is_in = contained[idx] != 0
            if cap_containable[j] != 0:
                # capture can only start at the mouth and then travel along
                # the tube: a segment adjacent to a contained one is open
                open_side = i < mouth_segments
                if not open_side and contained[idx - m] != 0:
                    open_side = True
                if not open_side and idx + m < n_seg * m \
                        and contained[idx + m] != 0:
                    open_side = True
                if update_contained != 0:
                    if is_in:
                        if d > tube_radius + 2.0 * cap_r[j]:
                            contained[idx] = 0
                            is_in = False
                    elif open_side and d <= tube_radius - 0.5 * cap_r[j] \
                            and 0.0 <= s <= 1.0:
                        contained[idx] = 1
                        is_in = True
                if not is_in:
                    continue
                pen = d - (tube_radius - cap_r[j])
                sign = -1.0  # ring pushes the limb back toward the bore axis
            else:
                if i < mouth_segments:
                    continue
                pen = tube_radius + cap_r[j] - d
                sign = 1.0  # rod pushes the body away from the tube
            if pen <= 0.0 or d <= 1e-9:
                continue
            cxp = pos[i, 0] + s * (pos[i + 1, 0] - pos[i, 0])
            cyp = pos[i, 1] + s * (pos[i + 1, 1] - pos[i, 1])
            czp = pos[i, 2] + s * (pos[i + 1, 2] - pos[i, 2])
            gx = cap_a[j, 0] + t * (cap_b[j, 0] - cap_a[j, 0])
            gy = cap_a[j, 1] + t * (cap_b[j, 1] - cap_a[j, 1])
            gz = cap_a[j, 2] + t * (cap_b[j, 2] - cap_a[j, 2])
            ux = (gx - cxp) / d
            uy = (gy - cyp) / d
            uz = (gz - czp) / d
            mag = k_contact * pen * sign
            out_force[count, 0] = mag * ux
            out_force[count, 1] = mag * uy
            out_force[count, 2] = mag * uz
            out_point[count, 0] = gx - ux * cap_r[j] * sign
            out_point[count, 1] = gy - uy * cap_r[j] * sign
            out_point[count, 2] = gz - uz * cap_r[j] * sign
            out_link[count] = cap_link[j]
            out_seg[count] = i
            out_sparam[count] = s
            count += 1
    return count


@_jit
def rigid_contacts(tool_a, tool_b, tool_r, cap_a, cap_b, cap_r, cap_link,
                   k_rigid, out_force, out_point, out_link):
    """Penalty contacts between the gripper tool capsule and human capsules.

    Forces push the human away from the tool.  Returns the contact count.
    """
    m = cap_a.shape[0]
    count = 0
    for j in range(m):
        s, t, d = seg_seg_closest(tool_a, tool_b, cap_a[j], cap_b[j])
        pen = tool_r + cap_r[j] - d
        if pen <= 0.0 or d <= 1e-9:
            continue
        tx = tool_a[0] + s * (tool_b[0] - tool_a[0])
        ty = tool_a[1] + s * (tool_b[1] - tool_a[1])
        tz = tool_a[2] + s * (tool_b[2] - tool_a[2])
        hx = cap_a[j, 0] + t * (cap_b[j, 0] - cap_a[j, 0])
        hy = cap_a[j, 1] + t * (cap_b[j, 1] - cap_a[j, 1])
        hz = cap_a[j, 2] + t * (cap_b[j, 2] - cap_a[j, 2])
        ux = (hx - tx) / d
        uy = (hy - ty) / d
        uz = (hz - tz) / d
        mag = k_rigid * pen
        out_force[count, 0] = mag * ux
        out_force[count, 1] = mag * uy
        out_force[count, 2] = mag * uz
        out_point[count, 0] = 0.5 * (tx + ux * tool_r + hx - ux * cap_r[j])
        out_point[count, 1] = 0.5 * (ty + uy * tool_r + hy - uy * cap_r[j])
        out_point[count, 2] = 0.5 * (tz + uz * tool_r + hz - uz * cap_r[j])
        out_link[count] = cap_link[j]
        count += 1
    return count


@_jit
def garment_internal_forces(pos, vel, rest_len, k_stretch, k_bend_eff,
                            damping, dashpot, mass, gravity, forces):
    """Stretch + bend springs, axial dashpots, drag and gravity per particle.

    Bend resistance is modeled as next-nearest-neighbor springs with rest
    length 2*rest_len and stiffness k_bend_eff.  Dashpots act on the relative
    velocity along each stretch spring, damping axial oscillation without
    resisting bulk translation.  Drag uses the current velocities (the
    integrator applies its own implicit drag divide, so the drag term here is
    only used for reaction-force reporting).
    """
    n = pos.shape[0]
    for i in range(n):
        for k in range(3):
            forces[i, k] = mass * gravity[k] - damping * vel[i, k]
    for span in range(1, 3):
        k = k_stretch if span == 1 else k_bend_eff
        rest = rest_len * span
        for i in range(n - span):
            dx = pos[i + span, 0] - pos[i, 0]
            dy = pos[i + span, 1] - pos[i, 1]
            dz = pos[i + span, 2] - pos[i, 2]
            length = np.sqrt(dx * dx + dy * dy + dz * dz)
            if length < 1e-12:
                continue
            f = k * (length - rest) / length
            if span == 1 and dashpot > 0.0:
                rvx = vel[i + span, 0] - vel[i, 0]
                rvy = vel[i + span, 1] - vel[i, 1]
                rvz = vel[i + span, 2] - vel[i, 2]
                axial = (rvx * dx + rvy * dy + rvz * dz) / (length * length)
                f += dashpot * axial
            fx = f * dx
            fy = f * dy
            fz = f * dz
            forces[i, 0] += fx
            forces[i, 1] += fy
            forces[i, 2] += fz
            forces[i + span, 0] -= fx
            forces[i + span, 1] -= fy
            forces[i + span, 2] -= fz


@_jit
def garment_step(pos, vel, contained, mouth_segments, grip_idx, n_pin,
                 grip_pos, grip_vel, rest_len, k_stretch, k_bend_eff, damping,
                 dashpot, mass, gravity, tube_radius, k_contact, cap_a, cap_b,
                 cap_r, cap_link, cap_containable, dt, n_sub, scratch_forces,
                 c_force, c_point, c_link, c_seg, c_sparam):
    """Semi-implicit Euler substeps of the sleeve with pinned grip particles.

    ``grip_pos``/``grip_vel`` are (2,3); particles grip_idx..grip_idx+n_pin-1
    are pinned to them (n_pin is 1 for a point grip, 2 when the gripper also
    fixes the cuff orientation).  Positions/velocities update in place.
    Contact forces from the human capsules act on the capsules; their
    negations are distributed onto the adjacent centerline particles.  Drag
    is integrated implicitly.

    Returns the reaction wrench (6,) the grip constraint exerted during the
    last substep: the negated sum of non-constraint forces on the pinned
    particles, with torque about the primary grip point.
    """
    n = pos.shape[0]
    reaction = np.zeros(6)
    for _ in range(n_sub):
        garment_internal_forces(pos, vel, rest_len, k_stretch, k_bend_eff,
                                damping, dashpot, mass, gravity,
                                scratch_forces)
        if cap_a.shape[0] > 0 and k_contact > 0.0:
            nc = garment_contacts(pos, contained, 1, mouth_segments, cap_a,
                                  cap_b, cap_r, cap_link, cap_containable,
                                  tube_radius, k_contact, c_force, c_point,
                                  c_link, c_seg, c_sparam)
            for c in range(nc):
                i = c_seg[c]
                s = c_sparam[c]
                for k in range(3):
                    scratch_forces[i, k] -= (1.0 - s) * c_force[c, k]
                    scratch_forces[i + 1, k] -= s * c_force[c, k]
        # reaction evaluated before integration; pinned drag is taken against
        # the imposed velocities
        for k in range(3):
            reaction[k] = 0.0
            reaction[3 + k] = 0.0
        for p in range(n_pin):
            i = grip_idx + p
            fx = -(scratch_forces[i, 0] + damping * vel[i, 0]
                   - damping * grip_vel[p, 0])
            fy = -(scratch_forces[i, 1] + damping * vel[i, 1]
                   - damping * grip_vel[p, 1])
            fz = -(scratch_forces[i, 2] + damping * vel[i, 2]
                   - damping * grip_vel[p, 2])
            rx = pos[i, 0] - grip_pos[0, 0]
            ry = pos[i, 1] - grip_pos[0, 1]
            rz = pos[i, 2] - grip_pos[0, 2]
            reaction[0] += fx
            reaction[1] += fy
            reaction[2] += fz
            reaction[3] += ry * fz - rz * fy
            reaction[4] += rz * fx - rx * fz
            reaction[5] += rx * fy - ry * fx
        drag_div = 1.0 + dt * damping / mass
        for i in range(n):
            if grip_idx <= i < grip_idx + n_pin:
                continue
            for k in range(3):
                # remove the explicit drag contribution and apply it implicitly
                f = scratch_forces[i, k] + damping * vel[i, k]
                vel[i, k] = (vel[i, k] + dt * f / mass) / drag_div
                pos[i, k] += dt * vel[i, k]
        for p in range(n_pin):
            for k in range(3):
                vel[grip_idx + p, k] = grip_vel[p, k]
                pos[grip_idx + p, k] = grip_pos[p, k]
    return reaction


@_jit
def gae_scan(rewards, values, bootstrap, ep_start, gamma, lam):
    """Reverse-recursion GAE over a batch of contiguous episodes.

    ``ep_start`` has one extra trailing entry equal to the total step count.
    ``bootstrap[e]`` is V(s_T) of episode e (zero for terminal ends).

    Returns (advantages, value_targets).
    """
    n = rewards.shape[0]
    adv = np.empty(n)
    n_ep = ep_start.shape[0] - 1
    for e in range(n_ep):
        lo = ep_start[e]
        hi = ep_start[e + 1]
        running = 0.0
        next_v = bootstrap[e]
        for t in range(hi - 1, lo - 1, -1):
            delta = rewards[t] + gamma * next_v - values[t]
            running = delta + gamma * lam * running
            adv[t] = running
            next_v = values[t]
    return adv, adv + values
