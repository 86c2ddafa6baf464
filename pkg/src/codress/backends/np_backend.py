"""Pure-numpy vectorized twin of the numba kernel backend.

Same call signatures and contracts as ``nb_backend``; selected by setting
``CODRESS_BACKEND=numpy``.  Contact enumeration order (segment-major,
capsule-minor) matches the loop backend so the two are interchangeable.
"""

from __future__ import annotations

import numpy as np

NUMBA_ENABLED = False


def rotation_about_axis(axis, angle, out):
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    x, y, z = axis
    out[:] = [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]


def fk_chain(parent, off_pos, off_rot, axis, link_len, base_rot, base_pos, q):
    n = q.shape[0]
    rot = np.empty((n, 3, 3))
    jpos = np.empty((n, 3))
    tip = np.empty((n, 3))
    jr = np.empty((3, 3))
    for i in range(n):
        p = parent[i]
        pr = base_rot if p < 0 else rot[p]
        pp = base_pos if p < 0 else jpos[p]
        jpos[i] = pp + pr @ off_pos[i]
        rotation_about_axis(axis[i], q[i], jr)
        rot[i] = pr @ off_rot[i] @ jr
        tip[i] = jpos[i] + rot[i, :, 0] * link_len[i]
    return rot, jpos, tip


def pd_step(q, qdot, target, prop, kp, kd, damping, tau_lim, q_min, q_max,
            dt, n_sub):
    q_out = q.copy()
    qd_out = qdot.copy()
    tau_out = np.zeros_like(q)
    for _ in range(n_sub):
        tau_raw = kp * (target - q_out) - kd * qd_out
        tau = np.clip(tau_raw, -tau_lim, tau_lim)
        sat = np.abs(tau_raw) > tau_lim

        dq = q_out - target
        qn = target + prop[:, 0, 0] * dq + prop[:, 0, 1] * qd_out
        vn = prop[:, 1, 0] * dq + prop[:, 1, 1] * qd_out

        if sat.any():
            c = damping[sat]
            tau_s = tau[sat]
            q_s = q_out[sat]
            v_s = qd_out[sat]
            damped = c > 1e-12
            decay = np.exp(-np.where(damped, c, 1.0) * dt)
            v_inf = np.where(damped, tau_s / np.where(damped, c, 1.0), 0.0)
            qn_d = q_s + v_inf * dt + (v_s - v_inf) * (1.0 - decay) / np.where(damped, c, 1.0)
            vn_d = v_inf + (v_s - v_inf) * decay
            qn_f = q_s + v_s * dt + 0.5 * tau_s * dt * dt
            vn_f = v_s + tau_s * dt
            qn[sat] = np.where(damped, qn_d, qn_f)
            vn[sat] = np.where(damped, vn_d, vn_f)

        low = qn < q_min
        high = qn > q_max
        qn = np.clip(qn, q_min, q_max)
        vn = np.where(low & (vn < 0.0), 0.0, vn)
        vn = np.where(high & (vn > 0.0), 0.0, vn)
        q_out, qd_out, tau_out = qn, vn, tau
    return q_out, qd_out, tau_out


def point_body(point, cap_a, cap_b, cap_r):
    ab = cap_b - cap_a
    ap = point[None, :] - cap_a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 1e-18, np.einsum("ij,ij->i", ap, ab) / np.where(denom > 1e-18, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest_axis = cap_a + t[:, None] * ab
    diff = point[None, :] - closest_axis
    axial = np.linalg.norm(diff, axis=1)
    dist = np.maximum(axial - cap_r, 0.0)
    j = int(np.argmin(dist))
    if axial[j] > 1e-12:
        pt = closest_axis[j] + diff[j] * (cap_r[j] / axial[j])
    else:
        pt = closest_axis[j] + np.array([cap_r[j], 0.0, 0.0])
    return float(dist[j]), pt, j


def points_body_distance(points, cap_a, cap_b, cap_r, out):
    for i in range(points.shape[0]):
        d, _, _ = point_body(points[i], cap_a, cap_b, cap_r)
        out[i] = d


def _seg_seg_batch(p0, p1, q0, q1):
    """Vectorized closest parameters between segment batches.

    All inputs (k,3).  Returns (s, t, dist) arrays of shape (k,).
    """
    u = p1 - p0
    v = q1 - q0
    w = p0 - q0
    a = np.einsum("ij,ij->i", u, u)
    b = np.einsum("ij,ij->i", u, v)
    c = np.einsum("ij,ij->i", v, v)
    d = np.einsum("ij,ij->i", u, w)
    e = np.einsum("ij,ij->i", v, w)
    den = a * c - b * b
    s = np.where(den > 1e-14, (b * e - c * d) / np.where(den > 1e-14, den, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = np.where(c > 1e-14, (b * s + e) / np.where(c > 1e-14, c, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    s = np.where(a > 1e-14, (b * t - d) / np.where(a > 1e-14, a, 1.0), s)
    s = np.clip(s, 0.0, 1.0)
    diff = (p0 + s[:, None] * u) - (q0 + t[:, None] * v)
    return s, t, np.linalg.norm(diff, axis=1)


def seg_seg_closest(p0, p1, q0, q1):
    s, t, d = _seg_seg_batch(p0[None], p1[None], q0[None], q1[None])
    return float(s[0]), float(t[0]), float(d[0])


def garment_contacts(pos, contained, update_contained, mouth_segments, cap_a,
                     cap_b, cap_r, cap_link, cap_containable, tube_radius,
                     k_contact, out_force, out_point, out_link, out_seg,
                     out_sparam):
    n_seg = pos.shape[0] - 1
    m = cap_a.shape[0]
    if n_seg == 0 or m == 0:
        return 0
    si = np.repeat(np.arange(n_seg), m)
    cj = np.tile(np.arange(m), n_seg)
    s, t, d = _seg_seg_batch(pos[si], pos[si + 1], cap_a[cj], cap_b[cj])
    cmat = contained.reshape(n_seg, m)
    dmat = d.reshape(n_seg, m)
    smat = s.reshape(n_seg, m)
    containable = cap_containable != 0
    if update_contained:
        # sequential over segments so capture propagates within one call,
        # matching the loop backend
        for i in range(n_seg):
            open_side = np.full(m, i < mouth_segments)
            if i > 0:
                open_side |= cmat[i - 1] != 0
            if i + 1 < n_seg:
                open_side |= cmat[i + 1] != 0
            is_in_row = cmat[i] != 0
            torn = is_in_row & (dmat[i] > tube_radius + 2.0 * cap_r)
            entered = (containable & ~is_in_row & open_side
                       & (dmat[i] <= tube_radius - 0.5 * cap_r)
                       & (smat[i] >= 0.0) & (smat[i] <= 1.0))
            cmat[i][torn] = 0
            cmat[i][entered] = 1
    is_in = contained != 0
    pen = np.where(is_in, d - (tube_radius - cap_r[cj]),
                   tube_radius + cap_r[cj] - d)
    sign = np.where(is_in, -1.0, 1.0)
    rod = ~containable[cj] & (si >= mouth_segments)
    active = (pen > 0.0) & (d > 1e-9) & (is_in | rod)
    idx = np.nonzero(active)[0]
    count = idx.shape[0]
    if count == 0:
        return 0
    si, cj, s, t, d = si[idx], cj[idx], s[idx], t[idx], d[idx]
    pen, sign = pen[idx], sign[idx]
    cpt = pos[si] + s[:, None] * (pos[si + 1] - pos[si])
    gpt = cap_a[cj] + t[:, None] * (cap_b[cj] - cap_a[cj])
    u = (gpt - cpt) / d[:, None]
    out_force[:count] = (k_contact * pen * sign)[:, None] * u
    out_point[:count] = gpt - u * (cap_r[cj] * sign)[:, None]
    out_link[:count] = cap_link[cj]
    out_seg[:count] = si
    out_sparam[:count] = s
    return count


def rigid_contacts(tool_a, tool_b, tool_r, cap_a, cap_b, cap_r, cap_link,
                   k_rigid, out_force, out_point, out_link):
    m = cap_a.shape[0]
    if m == 0:
        return 0
    s, t, d = _seg_seg_batch(np.broadcast_to(tool_a, (m, 3)),
                             np.broadcast_to(tool_b, (m, 3)), cap_a, cap_b)
    pen = tool_r + cap_r - d
    idx = np.nonzero((pen > 0.0) & (d > 1e-9))[0]
    count = idx.shape[0]
    if count == 0:
        return 0
    s, t, d, pen = s[idx], t[idx], d[idx], pen[idx]
    tpt = tool_a[None, :] + s[:, None] * (tool_b - tool_a)[None, :]
    hpt = cap_a[idx] + t[:, None] * (cap_b[idx] - cap_a[idx])
    u = (hpt - tpt) / d[:, None]
    out_force[:count] = (k_rigid * pen)[:, None] * u
    out_point[:count] = 0.5 * (tpt + u * tool_r + hpt - u * cap_r[idx, None])
    out_link[:count] = cap_link[idx]
    return count


def garment_internal_forces(pos, vel, rest_len, k_stretch, k_bend_eff,
                            damping, dashpot, mass, gravity, forces):
    forces[:] = mass * gravity[None, :] - damping * vel
    for span, k in ((1, k_stretch), (2, k_bend_eff)):
        d = pos[span:] - pos[:-span]
        length = np.linalg.norm(d, axis=1)
        ok = length > 1e-12
        safe = np.where(ok, length, 1.0)
        f = np.where(ok, k * (length - rest_len * span) / safe, 0.0)
        if span == 1 and dashpot > 0.0:
            rv = vel[span:] - vel[:-span]
            axial = np.einsum("ij,ij->i", rv, d) / (safe * safe)
            f = f + np.where(ok, dashpot * axial, 0.0)
        fvec = f[:, None] * d
        forces[:-span] += fvec
        forces[span:] -= fvec


def garment_step(pos, vel, contained, mouth_segments, grip_idx, n_pin,
                 grip_pos, grip_vel, rest_len, k_stretch, k_bend_eff, damping,
                 dashpot, mass, gravity, tube_radius, k_contact, cap_a, cap_b,
                 cap_r, cap_link, cap_containable, dt, n_sub, scratch_forces,
                 c_force, c_point, c_link, c_seg, c_sparam):
    n = pos.shape[0]
    reaction = np.zeros(6)
    pinned = np.arange(grip_idx, grip_idx + n_pin)
    free = np.ones(n, dtype=bool)
    free[pinned] = False
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
                scratch_forces[i] -= (1.0 - s) * c_force[c]
                scratch_forces[i + 1] -= s * c_force[c]
        fpin = -(scratch_forces[pinned] + damping * vel[pinned]
                 - damping * grip_vel[:n_pin])
        reaction = np.zeros(6)
        reaction[:3] = fpin.sum(axis=0)
        lever = pos[pinned] - grip_pos[0]
        reaction[3:] = np.cross(lever, fpin).sum(axis=0)
        drag_div = 1.0 + dt * damping / mass
        f = scratch_forces[free] + damping * vel[free]
        vel[free] = (vel[free] + dt * f / mass) / drag_div
        pos[free] += dt * vel[free]
        vel[pinned] = grip_vel[:n_pin]
        pos[pinned] = grip_pos[:n_pin]
    return reaction


def gae_scan(rewards, values, bootstrap, ep_start, gamma, lam):
    n = rewards.shape[0]
    adv = np.empty(n)
    n_ep = ep_start.shape[0] - 1
    for e in range(n_ep):
        lo, hi = ep_start[e], ep_start[e + 1]
        running = 0.0
        next_v = bootstrap[e]
        for t in range(hi - 1, lo - 1, -1):
            delta = rewards[t] + gamma * next_v - values[t]
            running = delta + gamma * lam * running
            adv[t] = running
            next_v = values[t]
    return adv, adv + values
