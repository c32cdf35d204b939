"""Articulated rigid-body dynamics kernels for the floating-base humanoid.

Generalized coordinates: qpos = [base position (3), base quaternion wxyz (4),
theta (J)], qvel = [base linear velocity (3), base angular velocity (3),
theta_dot (J)], both world-frame.  The equations of motion are assembled per
inner step from a world-frame Newton-Euler pass (bias forces, also usable as
full inverse dynamics) and a composite-rigid-body mass matrix, then advanced
by semi-implicit Euler.  Ground contact is a penalty spring-damper on the
foot contact points with a Coulomb cap on the viscous tangential force.

Everything here is numba-compiled and single-threaded; given identical
inputs the kernels are bit-deterministic.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np
from numba import njit

ModelArrays = namedtuple("ModelArrays", [
    "nb", "nj",
    "mass", "com", "inertia", "body_parent",
    "jparent", "jchild", "janchor", "jaxis",
    "damping", "spring", "kp", "kd", "tlim",
    "anc_joint",   # (J, J) 1 if joint k is on the path from joint l's child to base
    "body_anc",    # (B, J) 1 if joint k is on the path from body b to base
    "cbody", "clocal", "cfoot",
    "kcontact", "ccontact", "mu", "ctangent",
])

CONTACT_FORCE_EPS = 1.0  # N, per-foot normal force that counts as contact


def pack_model(model) -> ModelArrays:
    """Flatten a HumanoidModel into kernel-ready arrays."""
    nb, nj = model.num_bodies, model.num_joints
    body_anc = np.zeros((nb, nj), dtype=np.uint8)
    for b in range(nb):
        cur = b
        while cur != 0:
            j = int(model.body_parent_joint[cur])
            body_anc[b, j] = 1
            cur = int(model.joint_parent[j])
    anc_joint = np.zeros((nj, nj), dtype=np.uint8)
    for l in range(nj):
        anc_joint[l] = body_anc[int(model.joint_child[l])]
    cfoot = np.zeros(len(model.contact_body), dtype=np.int64)
    for p, cb in enumerate(model.contact_body):
        cfoot[p] = 0 if cb == model.foot_bodies[0] else 1
    return ModelArrays(
        nb=nb, nj=nj,
        mass=np.ascontiguousarray(model.body_mass),
        com=np.ascontiguousarray(model.body_com),
        inertia=np.ascontiguousarray(model.body_inertia),
        body_parent=np.ascontiguousarray(
            np.array([-1] + [int(model.joint_parent[int(model.body_parent_joint[b])])
                             for b in range(1, nb)], dtype=np.int64)),
        jparent=np.ascontiguousarray(model.joint_parent),
        jchild=np.ascontiguousarray(model.joint_child),
        janchor=np.ascontiguousarray(model.joint_anchor),
        jaxis=np.ascontiguousarray(model.joint_axis),
        damping=np.ascontiguousarray(model.joint_damping),
        spring=np.ascontiguousarray(model.joint_spring),
        kp=np.ascontiguousarray(model.kp),
        kd=np.ascontiguousarray(model.kd),
        tlim=np.ascontiguousarray(model.torque_limit),
        anc_joint=anc_joint,
        body_anc=body_anc,
        cbody=np.ascontiguousarray(model.contact_body),
        clocal=np.ascontiguousarray(model.contact_local),
        cfoot=cfoot,
        kcontact=float(model.contact_stiffness),
        ccontact=float(model.contact_damping),
        mu=float(model.friction),
        ctangent=float(model.tangential_damping),
    )


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _quat_to_mat(q, out):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out[0, 0] = 1 - 2 * (y * y + z * z)
    out[0, 1] = 2 * (x * y - w * z)
    out[0, 2] = 2 * (x * z + w * y)
    out[1, 0] = 2 * (x * y + w * z)
    out[1, 1] = 1 - 2 * (x * x + z * z)
    out[1, 2] = 2 * (y * z - w * x)
    out[2, 0] = 2 * (x * z - w * y)
    out[2, 1] = 2 * (y * z + w * x)
    out[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def _axis_angle_mat(axis, angle, out):
    x, y, z = axis[0], axis[1], axis[2]
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    out[0, 0] = c + x * x * t
    out[0, 1] = x * y * t - z * s
    out[0, 2] = x * z * t + y * s
    out[1, 0] = x * y * t + z * s
    out[1, 1] = c + y * y * t
    out[1, 2] = y * z * t - x * s
    out[2, 0] = x * z * t - y * s
    out[2, 1] = y * z * t + x * s
    out[2, 2] = c + z * z * t


@njit(cache=True)
def _integrate_quat(q, omega, dt):
    """q <- normalize(exp(omega*dt/2) * q), omega in world frame."""
    rx = omega[0] * dt
    ry = omega[1] * dt
    rz = omega[2] * dt
    angle = np.sqrt(rx * rx + ry * ry + rz * rz)
    if angle < 1e-12:
        dw, dx, dy, dz = 1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz
    else:
        half = 0.5 * angle
        s = np.sin(half) / angle
        dw, dx, dy, dz = np.cos(half), rx * s, ry * s, rz * s
    w, x, y, z = q[0], q[1], q[2], q[3]
    nw = dw * w - dx * x - dy * y - dz * z
    nx = dw * x + dx * w + dy * z - dz * y
    ny = dw * y - dx * z + dy * w + dz * x
    nz = dw * z + dx * y - dy * x + dz * w
    norm = np.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    q[0] = nw / norm
    q[1] = nx / norm
    q[2] = ny / norm
    q[3] = nz / norm


@njit(cache=True)
def _fk_vel(ma, qpos, qvel, R, po, wb, vo, jax_w, janc_w):
    """Positions, orientations, and body-origin velocities for every body."""
    nj = ma.nj
    _quat_to_mat(qpos[3:7], R[0])
    for i in range(3):
        po[0, i] = qpos[i]
        vo[0, i] = qvel[i]
        wb[0, i] = qvel[3 + i]
    tmp = np.empty(3)
    rel = np.empty(3)
    Rj = np.empty((3, 3))
    for j in range(nj):
        p = ma.jparent[j]
        c = ma.jchild[j]
        # world axis and anchor
        for i in range(3):
            jax_w[j, i] = R[p, i, 0] * ma.jaxis[j, 0] + R[p, i, 1] * ma.jaxis[j, 1] + R[p, i, 2] * ma.jaxis[j, 2]
            janc_w[j, i] = po[p, i] + R[p, i, 0] * ma.janchor[j, 0] + R[p, i, 1] * ma.janchor[j, 1] + R[p, i, 2] * ma.janchor[j, 2]
        _axis_angle_mat(ma.jaxis[j], qpos[7 + j], Rj)
        for a in range(3):
            for b in range(3):
                s = 0.0
                for k in range(3):
                    s += R[p, a, k] * Rj[k, b]
                R[c, a, b] = s
        thd = qvel[6 + j]
        for i in range(3):
            po[c, i] = janc_w[j, i]
            wb[c, i] = wb[p, i] + jax_w[j, i] * thd
            rel[i] = janc_w[j, i] - po[p, i]
        _cross(wb[p], rel, tmp)
        for i in range(3):
            vo[c, i] = vo[p, i] + tmp[i]


@njit(cache=True)
def _inverse_dynamics(ma, qpos, qvel, qacc, gravity, tau_out):
    """Generalized forces required for qacc, gravity included.

    tau_out has length 6+J: base-translation rows, base-rotation rows about
    the base origin (world axes), then one row per joint.
    """
    nb, nj = ma.nb, ma.nj
    R = np.empty((nb, 3, 3))
    po = np.empty((nb, 3))
    wb = np.empty((nb, 3))
    vo = np.empty((nb, 3))
    jax_w = np.empty((nj, 3))
    janc_w = np.empty((nj, 3))
    _fk_vel(ma, qpos, qvel, R, po, wb, vo, jax_w, janc_w)

    awb = np.empty((nb, 3))
    ao = np.empty((nb, 3))
    for i in range(3):
        ao[0, i] = qacc[i]
        awb[0, i] = qacc[3 + i]
    rel = np.empty(3)
    t1 = np.empty(3)
    t2 = np.empty(3)
    for j in range(nj):
        p = ma.jparent[j]
        c = ma.jchild[j]
        thd = qvel[6 + j]
        thdd = qacc[6 + j]
        for i in range(3):
            rel[i] = janc_w[j, i] - po[p, i]
        _cross(awb[p], rel, t1)
        _cross(wb[p], rel, t2)
        _cross(wb[p], t2, rel)  # rel now w x (w x r)
        for i in range(3):
            ao[c, i] = ao[p, i] + t1[i] + rel[i]
        for i in range(3):
            t1[i] = jax_w[j, i] * thd
        _cross(wb[p], t1, t2)
        for i in range(3):
            awb[c, i] = awb[p, i] + jax_w[j, i] * thdd + t2[i]

    # per-body force and moment about the world origin
    Fs = np.zeros((nb, 3))
    Ms = np.zeros((nb, 3))
    cw = np.empty(3)
    r = np.empty(3)
    Iw = np.empty((3, 3))
    for b in range(nb):
        for i in range(3):
            cw[i] = po[b, i] + R[b, i, 0] * ma.com[b, 0] + R[b, i, 1] * ma.com[b, 1] + R[b, i, 2] * ma.com[b, 2]
            r[i] = cw[i] - po[b, i]
        _cross(awb[b], r, t1)
        _cross(wb[b], r, t2)
        _cross(wb[b], t2, r)  # r now w x (w x (c - o))
        ac0 = ao[b, 0] + t1[0] + r[0]
        ac1 = ao[b, 1] + t1[1] + r[1]
        ac2 = ao[b, 2] + t1[2] + r[2]
        m = ma.mass[b]
        F0 = m * (ac0 - gravity[0])
        F1 = m * (ac1 - gravity[1])
        F2 = m * (ac2 - gravity[2])
        # Iw = R I R^T
        for a in range(3):
            for bb in range(3):
                s = 0.0
                for k in range(3):
                    for kk in range(3):
                        s += R[b, a, k] * ma.inertia[b, k, kk] * R[b, bb, kk]
                Iw[a, bb] = s
        for i in range(3):
            t1[i] = Iw[i, 0] * awb[b, 0] + Iw[i, 1] * awb[b, 1] + Iw[i, 2] * awb[b, 2]
            t2[i] = Iw[i, 0] * wb[b, 0] + Iw[i, 1] * wb[b, 1] + Iw[i, 2] * wb[b, 2]
        _cross(wb[b], t2, r)  # r now w x (Iw w)
        N0 = t1[0] + r[0]
        N1 = t1[1] + r[1]
        N2 = t1[2] + r[2]
        Fs[b, 0] = F0
        Fs[b, 1] = F1
        Fs[b, 2] = F2
        # moment about world origin: N + c x F
        Ms[b, 0] = N0 + cw[1] * F2 - cw[2] * F1
        Ms[b, 1] = N1 + cw[2] * F0 - cw[0] * F2
        Ms[b, 2] = N2 + cw[0] * F1 - cw[1] * F0

    # accumulate subtrees (children are ordered after parents)
    for b in range(nb - 1, 0, -1):
        p = ma.body_parent[b]
        for i in range(3):
            Fs[p, i] += Fs[b, i]
            Ms[p, i] += Ms[b, i]

    for i in range(3):
        tau_out[i] = Fs[0, i]
    _cross(qpos[0:3], Fs[0], t1)  # p_base x F_total
    for i in range(3):
        tau_out[3 + i] = Ms[0, i] - t1[i]
    for j in range(nj):
        c = ma.jchild[j]
        _cross(janc_w[j], Fs[c], t1)
        tau_out[6 + j] = (jax_w[j, 0] * (Ms[c, 0] - t1[0])
                          + jax_w[j, 1] * (Ms[c, 1] - t1[1])
                          + jax_w[j, 2] * (Ms[c, 2] - t1[2]))


@njit(cache=True)
def _mass_matrix(ma, qpos, M_out):
    """Composite-rigid-body mass matrix in the same coordinates as above."""
    nb, nj = ma.nb, ma.nj
    n = 6 + nj
    R = np.empty((nb, 3, 3))
    po = np.empty((nb, 3))
    wb = np.empty((nb, 3))
    vo = np.empty((nb, 3))
    jax_w = np.empty((nj, 3))
    janc_w = np.empty((nj, 3))
    zero_v = np.zeros(6 + nj)
    _fk_vel(ma, qpos, zero_v, R, po, wb, vo, jax_w, janc_w)

    # composite mass, first moment, and inertia about the world origin
    mC = np.zeros(nb)
    hC = np.zeros((nb, 3))      # sum of m_i * c_i
    IoC = np.zeros((nb, 3, 3))  # inertia about world origin
    cw = np.empty(3)
    Iw = np.empty((3, 3))
    for b in range(nb):
        m = ma.mass[b]
        for i in range(3):
            cw[i] = po[b, i] + R[b, i, 0] * ma.com[b, 0] + R[b, i, 1] * ma.com[b, 1] + R[b, i, 2] * ma.com[b, 2]
        for a in range(3):
            for bb in range(3):
                s = 0.0
                for k in range(3):
                    for kk in range(3):
                        s += R[b, a, k] * ma.inertia[b, k, kk] * R[b, bb, kk]
                Iw[a, bb] = s
        c2 = cw[0] * cw[0] + cw[1] * cw[1] + cw[2] * cw[2]
        mC[b] = m
        for i in range(3):
            hC[b, i] = m * cw[i]
        for a in range(3):
            for bb in range(3):
                par = -m * cw[a] * cw[bb]
                if a == bb:
                    par += m * c2
                IoC[b, a, bb] = Iw[a, bb] + par
    for b in range(nb - 1, 0, -1):
        p = ma.body_parent[b]
        mC[p] += mC[b]
        for i in range(3):
            hC[p, i] += hC[b, i]
        for a in range(3):
            for bb in range(3):
                IoC[p, a, bb] += IoC[b, a, bb]

    for a in range(n):
        for b in range(n):
            M_out[a, b] = 0.0

    F = np.empty(3)
    Mo = np.empty(3)
    t1 = np.empty(3)
    s_ang = np.empty(3)
    o = np.empty(3)
    c = np.empty(3)
    Icom = np.empty((3, 3))

    # columns: 20 dofs; for a dof moving composite body beta with axis pair
    # (s_ang about point o, s_lin), compute the composite reaction (F, Mo)
    # and project onto every ancestor dof row.
    for col in range(n):
        if col < 3:
            # base translation: unit linear acceleration of everything
            beta = 0
            for i in range(3):
                s_ang[i] = 0.0
                o[i] = 0.0
            s_lin = col
        elif col < 6:
            beta = 0
            for i in range(3):
                s_ang[i] = 1.0 if i == col - 3 else 0.0
                o[i] = qpos[i]
            s_lin = -1
        else:
            j = col - 6
            beta = ma.jchild[j]
            for i in range(3):
                s_ang[i] = jax_w[j, i]
                o[i] = janc_w[j, i]
            s_lin = -1

        m = mC[beta]
        for i in range(3):
            c[i] = hC[beta, i] / m
        c2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
        for a in range(3):
            for bb in range(3):
                par = -m * c[a] * c[bb]
                if a == bb:
                    par += m * c2
                Icom[a, bb] = IoC[beta, a, bb] - par

        # com acceleration for unit dof acceleration
        for i in range(3):
            t1[i] = c[i] - o[i]
        _cross(s_ang, t1, F)
        if s_lin >= 0:
            F[s_lin] += 1.0
        for i in range(3):
            F[i] *= m
        for i in range(3):
            Mo[i] = Icom[i, 0] * s_ang[0] + Icom[i, 1] * s_ang[1] + Icom[i, 2] * s_ang[2]
        _cross(c, F, t1)
        for i in range(3):
            Mo[i] += t1[i]

        # project on rows: base translation
        for i in range(3):
            M_out[i, col] = F[i]
        # base rotation rows about base origin
        _cross(qpos[0:3], F, t1)
        for i in range(3):
            M_out[3 + i, col] = Mo[i] - t1[i]
        # ancestor joint rows
        if col >= 6:
            j = col - 6
            for k in range(nj):
                if ma.anc_joint[j, k] == 1:
                    _cross(janc_w[k], F, t1)
                    M_out[6 + k, col] = (jax_w[k, 0] * (Mo[0] - t1[0])
                                         + jax_w[k, 1] * (Mo[1] - t1[1])
                                         + jax_w[k, 2] * (Mo[2] - t1[2]))

    # mirror: joint rows for base columns and descendant-joint rows were not
    # filled directly; the upper triangle holds every computed entry
    for b in range(6, n):
        for a in range(b):
            M_out[b, a] = M_out[a, b]


@njit(cache=True)
def _point_jacobian_row(ma, qpos, R, po, b, pw, jax_w, janc_w, jrow):
    """World-velocity Jacobian (3 x n) of a point fixed to body b."""
    nj = ma.nj
    n = 6 + nj
    for a in range(3):
        for k in range(n):
            jrow[a, k] = 0.0
        jrow[a, a] = 1.0
    r0 = pw[0] - qpos[0]
    r1 = pw[1] - qpos[1]
    r2 = pw[2] - qpos[2]
    # d(omega x r)/d omega = -skew(r)
    jrow[0, 4] = r2
    jrow[0, 5] = -r1
    jrow[1, 3] = -r2
    jrow[1, 5] = r0
    jrow[2, 3] = r1
    jrow[2, 4] = -r0
    for j in range(nj):
        if ma.body_anc[b, j] == 1:
            s0 = pw[0] - janc_w[j, 0]
            s1 = pw[1] - janc_w[j, 1]
            s2 = pw[2] - janc_w[j, 2]
            jrow[0, 6 + j] = jax_w[j, 1] * s2 - jax_w[j, 2] * s1
            jrow[1, 6 + j] = jax_w[j, 2] * s0 - jax_w[j, 0] * s2
            jrow[2, 6 + j] = jax_w[j, 0] * s1 - jax_w[j, 1] * s0


@njit(cache=True)
def _contact_forces(ma, qpos, R, po, wb, vo, jax_w, janc_w, dt,
                    tau_ext, damp_mat, foot_normal):
    """Penalty ground forces at the foot contact points.

    The normal spring-damper and kinetic (sliding) friction are applied
    explicitly into tau_ext.  While a point sticks (viscous tangential force
    inside the Coulomb cone) the viscous term is instead accumulated into
    damp_mat so the integrator treats it implicitly; that permits a stiff
    tangential coefficient without chatter.
    """
    npts = ma.cbody.shape[0]
    n = 6 + ma.nj
    pw = np.empty(3)
    vw = np.empty(3)
    rel = np.empty(3)
    t1 = np.empty(3)
    f = np.empty(3)
    jrow = np.empty((3, n))
    foot_normal[0] = 0.0
    foot_normal[1] = 0.0
    for p in range(npts):
        b = ma.cbody[p]
        for i in range(3):
            pw[i] = po[b, i] + R[b, i, 0] * ma.clocal[p, 0] + R[b, i, 1] * ma.clocal[p, 1] + R[b, i, 2] * ma.clocal[p, 2]
        if pw[2] >= 0.0:
            continue
        for i in range(3):
            rel[i] = pw[i] - po[b, i]
        _cross(wb[b], rel, t1)
        for i in range(3):
            vw[i] = vo[b, i] + t1[i]
        depth = -pw[2]
        fn = ma.kcontact * depth - ma.ccontact * vw[2]
        if fn < 0.0:
            fn = 0.0
        foot_normal[ma.cfoot[p]] += fn
        fcap = ma.mu * fn
        vmag = np.sqrt(vw[0] * vw[0] + vw[1] * vw[1])
        sliding = ma.ctangent * vmag > fcap
        if sliding and vmag > 1e-12:
            f[0] = -fcap * vw[0] / vmag
            f[1] = -fcap * vw[1] / vmag
        else:
            f[0] = 0.0
            f[1] = 0.0
        f[2] = fn
        _point_jacobian_row(ma, qpos, R, po, b, pw, jax_w, janc_w, jrow)
        if not sliding:
            # implicit viscous tangential force: dt * ct * (Jx^T Jx + Jy^T Jy)
            for a in range(2):
                for i in range(n):
                    ji = jrow[a, i]
                    if ji == 0.0:
                        continue
                    w = dt * ma.ctangent * ji
                    for k in range(n):
                        if jrow[a, k] != 0.0:
                            damp_mat[i, k] += w * jrow[a, k]
        # explicit part mapped through the same jacobian
        for i in range(n):
            tau_ext[i] += jrow[0, i] * f[0] + jrow[1, i] * f[1] + jrow[2, i] * f[2]


@njit(cache=True)
def _inner_step(ma, qpos, qvel, motor_tau, ext_force, gravity, dt, foot_normal):
    """One semi-implicit Euler step at the inner (2 kHz) rate, in place."""
    nb, nj = ma.nb, ma.nj
    n = 6 + nj
    R = np.empty((nb, 3, 3))
    po = np.empty((nb, 3))
    wb = np.empty((nb, 3))
    vo = np.empty((nb, 3))
    jax_w = np.empty((nj, 3))
    janc_w = np.empty((nj, 3))
    _fk_vel(ma, qpos, qvel, R, po, wb, vo, jax_w, janc_w)

    tau = np.zeros(n)
    for j in range(nj):
        tau[6 + j] = motor_tau[j] - ma.spring[j] * qpos[7 + j]
    for i in range(3):
        tau[i] += ext_force[i]
    damp_mat = np.zeros((n, n))
    _contact_forces(ma, qpos, R, po, wb, vo, jax_w, janc_w, dt, tau, damp_mat, foot_normal)

    bias = np.empty(n)
    zero_acc = np.zeros(n)
    _inverse_dynamics(ma, qpos, qvel, zero_acc, gravity, bias)
    M = np.empty((n, n))
    _mass_matrix(ma, qpos, M)
    # joint damping and sticking-contact viscosity enter implicitly (evaluated
    # at the new velocity): (M + dt*D) v' = M v + dt*(tau - bias); this stays
    # stable for stiff damping where the explicit form oscillates
    rhs = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(n):
            s += M[i, k] * qvel[k]
        rhs[i] = s + dt * (tau[i] - bias[i])
    for j in range(nj):
        damp_mat[6 + j, 6 + j] += ma.damping[j] * dt
    for i in range(n):
        for k in range(n):
            M[i, k] += damp_mat[i, k]
    vnew = np.linalg.solve(M, rhs)

    for i in range(n):
        qvel[i] = vnew[i]
    for i in range(3):
        qpos[i] += qvel[i] * dt
    _integrate_quat(qpos[3:7], qvel[3:6], dt)
    for j in range(nj):
        qpos[7 + j] += qvel[6 + j] * dt


@njit(cache=True)
def _control_step(ma, qpos, qvel, setpoints, ext_force, gravity, dt, n_inner,
                  contact, air_time):
    """Hold PD setpoints for n_inner inner steps.

    Updates contact flags and per-foot air timers at the inner rate; a foot's
    timer resets the step its flag turns true.  Returns (mean |motor torque|
    per joint, mean per-foot normal force, touchdown latches, air time at the
    first touchdown in the window).
    """
    nj = ma.nj
    motor = np.empty(nj)
    foot_normal = np.empty(2)
    mean_tau = np.zeros(nj)
    mean_fn = np.zeros(2)
    touchdown = np.zeros(2, dtype=np.uint8)
    air_at_td = np.zeros(2)
    for it in range(n_inner):
        for j in range(nj):
            t = ma.kp[j] * (setpoints[j] - qpos[7 + j]) - ma.kd[j] * qvel[6 + j]
            if t > ma.tlim[j]:
                t = ma.tlim[j]
            elif t < -ma.tlim[j]:
                t = -ma.tlim[j]
            motor[j] = t
            mean_tau[j] += abs(t)
        _inner_step(ma, qpos, qvel, motor, ext_force, gravity, dt, foot_normal)
        for fo in range(2):
            mean_fn[fo] += foot_normal[fo]
            in_contact = foot_normal[fo] > CONTACT_FORCE_EPS
            if in_contact and contact[fo] == 0:
                if touchdown[fo] == 0:
                    touchdown[fo] = 1
                    air_at_td[fo] = air_time[fo]
                air_time[fo] = 0.0
            if not in_contact:
                air_time[fo] += dt
            contact[fo] = 1 if in_contact else 0
    for j in range(nj):
        mean_tau[j] /= n_inner
    for fo in range(2):
        mean_fn[fo] /= n_inner
    return mean_tau, mean_fn, touchdown, air_at_td


# ---------------------------------------------------------------------------
# Python-level wrappers (tests and cross-checks)


def inverse_dynamics(ma: ModelArrays, qpos, qvel, qacc, gravity) -> np.ndarray:
    tau = np.empty(6 + ma.nj)
    _inverse_dynamics(ma, np.asarray(qpos, float), np.asarray(qvel, float),
                      np.asarray(qacc, float), np.asarray(gravity, float), tau)
    return tau


def bias_forces(ma: ModelArrays, qpos, qvel, gravity) -> np.ndarray:
    return inverse_dynamics(ma, qpos, qvel, np.zeros(6 + ma.nj), gravity)


def mass_matrix(ma: ModelArrays, qpos) -> np.ndarray:
    M = np.empty((6 + ma.nj, 6 + ma.nj))
    _mass_matrix(ma, np.asarray(qpos, float), M)
    return M
