"""Numba kernel for the penalty-contact rigid-body integrator.

Generalised coordinates are the gripper pose ``(x, y, phi)``; the manipuland
is rigidly attached through the grasp transform. Velocity-dependent forces
(spring damping, contact damping, friction) and the spring/contact
stiffnesses are linearised into the velocity update so the step stays
stable with stiff penalty contacts.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_PENETRATING_START = 1


@njit(cache=True)
def _log_se2(dx, dy, dth):
    t = (dth + math.pi) % (2.0 * math.pi) - math.pi
    if abs(t) < 1e-6:
        t2 = t * t
        a = 1.0 - t2 / 6.0
        b = t / 2.0 - t * t2 / 24.0
    else:
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t
    det = a * a + b * b
    return t, (a * dx + b * dy) / det, (-b * dx + a * dy) / det


@njit(cache=True)
def _add_contact(F, Jv, Jx, gx, gy, v, cx, cy, nx, ny, depth, kc, cn, mu, vslip):
    rx = cx - gx
    ry = cy - gy
    vpx = v[0] - v[2] * ry
    vpy = v[1] + v[2] * rx
    vn = nx * vpx + ny * vpy
    fn = kc * depth - cn * vn
    if fn <= 0.0:
        return
    tx = -ny
    ty = nx
    vt = tx * vpx + ty * vpy
    th = math.tanh(vt / vslip)
    sech2 = 1.0 - th * th
    ff = -mu * fn * th
    fx = fn * nx + ff * tx
    fy = fn * ny + ff * ty
    F[0] += fx
    F[1] += fy
    F[2] += rx * fy - ry * fx
    # d f / d v_point, 2x2
    # dfn/dvp = -cn n^T ; dff/dvp = -mu (th dfn/dvp + fn sech2/vslip t^T)
    g = mu * fn * sech2 / vslip
    d00 = -cn * nx * nx + tx * (mu * th * cn * nx - g * tx)
    d01 = -cn * nx * ny + tx * (mu * th * cn * ny - g * ty)
    d10 = -cn * ny * nx + ty * (mu * th * cn * nx - g * tx)
    d11 = -cn * ny * ny + ty * (mu * th * cn * ny - g * ty)
    # A = [[1,0,-ry],[0,1,rx]]; J += A^T D A
    a0 = (1.0, 0.0, -ry)
    a1 = (0.0, 1.0, rx)
    for i in range(3):
        for j in range(3):
            Jv[i, j] += a0[i] * (d00 * a0[j] + d01 * a1[j]) + a1[i] * (d10 * a0[j] + d11 * a1[j])
            Jx[i, j] -= kc * (a0[i] * nx + a1[i] * ny) * (nx * a0[j] + ny * a1[j])


@njit(cache=True)
def _contacts(
    F, Jv, Jx, g, v, W, WN, mstart, mcount, medge_exp,
    E, EN, estart, ecount, eedge_exp, evert_exp, kc, cn, mu, vslip, accumulate,
):
    """Accumulate penalty contact wrenches; return the deepest penetration."""
    maxd = 0.0
    # manipuland vertices inside environment pieces
    for k in range(estart.shape[0]):
        s0 = estart[k]
        ne = ecount[k]
        for i in range(W.shape[0]):
            px = W[i, 0]
            py = W[i, 1]
            smax = -1e300
            best = -1e300
            bj = -1
            for j in range(ne):
                s = (px - E[s0 + j, 0]) * EN[s0 + j, 0] + (py - E[s0 + j, 1]) * EN[s0 + j, 1]
                if s > smax:
                    smax = s
                if eedge_exp[s0 + j] and s > best:
                    best = s
                    bj = j
            if smax < 0.0 and bj >= 0:
                d = -best
                if d > maxd:
                    maxd = d
                if accumulate:
                    _add_contact(F, Jv, Jx, g[0], g[1], v, px, py,
                                 EN[s0 + bj, 0], EN[s0 + bj, 1], d, kc, cn, mu, vslip)
    # environment vertices inside manipuland pieces
    for k in range(mstart.shape[0]):
        s0 = mstart[k]
        nm = mcount[k]
        for i in range(E.shape[0]):
            if not evert_exp[i]:
                continue
            px = E[i, 0]
            py = E[i, 1]
            smax = -1e300
            best = -1e300
            bj = -1
            for j in range(nm):
                s = (px - W[s0 + j, 0]) * WN[s0 + j, 0] + (py - W[s0 + j, 1]) * WN[s0 + j, 1]
                if s > smax:
                    smax = s
                if medge_exp[s0 + j] and s > best:
                    best = s
                    bj = j
            if smax < 0.0 and bj >= 0:
                d = -best
                if d > maxd:
                    maxd = d
                if accumulate:
                    _add_contact(F, Jv, Jx, g[0], g[1], v, px, py,
                                 -WN[s0 + bj, 0], -WN[s0 + bj, 1], d, kc, cn, mu, vslip)
    return maxd


@njit(cache=True)
def _pose_manip(g, grasp, M, mstart, mcount, W, WN):
    c = math.cos(g[2])
    s = math.sin(g[2])
    mx = g[0] + c * grasp[0] - s * grasp[1]
    my = g[1] + s * grasp[0] + c * grasp[1]
    mt = g[2] + grasp[2]
    c = math.cos(mt)
    s = math.sin(mt)
    for i in range(M.shape[0]):
        W[i, 0] = mx + c * M[i, 0] - s * M[i, 1]
        W[i, 1] = my + s * M[i, 0] + c * M[i, 1]
    for k in range(mstart.shape[0]):
        s0 = mstart[k]
        n = mcount[k]
        for j in range(n):
            a = s0 + j
            b = s0 + (j + 1) % n
            dx = W[b, 0] - W[a, 0]
            dy = W[b, 1] - W[a, 1]
            L = math.sqrt(dx * dx + dy * dy)
            WN[a, 0] = dy / L
            WN[a, 1] = -dx / L


@njit(cache=True)
def integrate(
    g0, grasp, M, mstart, mcount, medge_exp,
    E, EN, estart, ecount, eedge_exp, evert_exp,
    Kt, Kr, Bt, Br, setpoint,
    dt, mass, inertia, kc, cn, mu, vslip,
    rest_eps, rest_steps, n_steps, start_tol,
):
    """Integrate one compliant motion.

    Returns ``(final_pose, status, steps, max_depth)``.
    """
    g = g0.copy()
    v = np.zeros(3)
    W = np.empty_like(M)
    WN = np.empty_like(M)
    F = np.zeros(3)
    Jv = np.zeros((3, 3))
    Jx = np.zeros((3, 3))
    A = np.zeros((3, 3))
    rhs = np.zeros(3)

    _pose_manip(g, grasp, M, mstart, mcount, W, WN)
    d0 = _contacts(F, Jv, Jx, g, v, W, WN, mstart, mcount, medge_exp,
                   E, EN, estart, ecount, eedge_exp, evert_exp, kc, cn, mu, vslip, False)
    if d0 > start_tol:
        return g, STATUS_PENETRATING_START, 0, d0

    cd = math.cos(setpoint[2])
    sd = math.sin(setpoint[2])
    maxd = d0
    still = 0
    step = 0
    while step < n_steps:
        _pose_manip(g, grasp, M, mstart, mcount, W, WN)
        F[:] = 0.0
        Jv[:, :] = 0.0
        Jx[:, :] = 0.0
        d = _contacts(F, Jv, Jx, g, v, W, WN, mstart, mcount, medge_exp,
                      E, EN, estart, ecount, eedge_exp, evert_exp, kc, cn, mu, vslip, True)
        if d > maxd:
            maxd = d
        # pose error G_d^-1 G expressed in the setpoint frame
        dxw = g[0] - setpoint[0]
        dyw = g[1] - setpoint[1]
        ex = cd * dxw + sd * dyw
        ey = -sd * dxw + cd * dyw
        eth, rx, ry = _log_se2(ex, ey, g[2] - setpoint[2])
        # translational error back in world axes
        wx = cd * rx - sd * ry
        wy = sd * rx + cd * ry
        F[0] += -(Kt[0, 0] * wx + Kt[0, 1] * wy) - (Bt[0, 0] * v[0] + Bt[0, 1] * v[1])
        F[1] += -(Kt[1, 0] * wx + Kt[1, 1] * wy) - (Bt[1, 0] * v[0] + Bt[1, 1] * v[1])
        F[2] += -Kr * eth - Br * v[2]
        for i in range(2):
            for j in range(2):
                Jv[i, j] -= Bt[i, j]
                Jx[i, j] -= Kt[i, j]
        Jv[2, 2] -= Br
        Jx[2, 2] -= Kr

        for i in range(3):
            rhs[i] = F[i]
            for j in range(3):
                rhs[i] += dt * Jx[i, j] * v[j]
                A[i, j] = -dt * Jv[i, j] - dt * dt * Jx[i, j]
            rhs[i] *= dt
        A[0, 0] += mass
        A[1, 1] += mass
        A[2, 2] += inertia
        dv = np.linalg.solve(A, rhs)
        for i in range(3):
            v[i] += dv[i]
            g[i] += dt * v[i]
        step += 1

        if math.sqrt(v[0] * v[0] + v[1] * v[1]) < rest_eps and abs(v[2]) < rest_eps:
            still += 1
            if still >= rest_steps:
                break
        else:
            still = 0
    return g, STATUS_OK, step, maxd


@njit(cache=True)
def penetration(g, grasp, M, mstart, mcount, medge_exp, E, EN, estart, ecount, eedge_exp, evert_exp):
    W = np.empty_like(M)
    WN = np.empty_like(M)
    F = np.zeros(3)
    J = np.zeros((3, 3))
    v = np.zeros(3)
    _pose_manip(g, grasp, M, mstart, mcount, W, WN)
    return _contacts(F, J, J, g, v, W, WN, mstart, mcount, medge_exp,
                     E, EN, estart, ecount, eedge_exp, evert_exp, 0.0, 0.0, 0.0, 1.0, False)
