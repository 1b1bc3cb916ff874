"""Compiled inner loops: plant RK4 step and the generator's closed-loop rollout.

The closed-loop kernels are written once and compiled for both real and
complex input; the complex instantiation gives exact first derivatives by
complex step. Parameter and gain packing:

    P = [m_Q, m_L, g]
    G = [K_p(3), K_d(3), k_pl, k_dl, k_a, k_q, k_w, k_b, iota, rho]
"""

import numba as nb
import numpy as np

XI_SIZE = 19


@nb.njit(cache=True)
def _cross(a, b):
    out = np.empty_like(a)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@nb.njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


# 3-vectors as tuples keep the closed-loop kernel free of heap allocation.


@nb.njit(inline="always")
def _tc(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


@nb.njit(inline="always")
def _td(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@nb.njit(inline="always")
def _tlin(s, a, t, b):
    """s a + t b"""
    return (s * a[0] + t * b[0], s * a[1] + t * b[1], s * a[2] + t * b[2])


@nb.njit(cache=True)
def _forces(x_L, v_L, q, w, L, L_dot, xd, Lt0, Lt1, Lt2, P, G, measured):
    m_Q, m_L, g = P[0], P[1], P[2]
    k_pl, k_dl, k_a, k_q, k_w, k_b, iota, rho = G[6], G[7], G[8], G[9], G[10], G[11], G[12], G[13]
    q_dot = _tc(w, q)
    ex0, ex1, ex2 = x_L[0] - xd[0, 0], x_L[1] - xd[0, 1], x_L[2] - xd[0, 2]
    ev = (v_L[0] - xd[1, 0], v_L[1] - xd[1, 1], v_L[2] - xd[1, 2])
    tx = (np.tanh(ex0), np.tanh(ex1), np.tanh(ex2))
    tv = (np.tanh(ev[0]), np.tanh(ev[1]), np.tanh(ev[2]))
    cx = (np.cosh(ex0), np.cosh(ex1), np.cosh(ex2))
    cv = (np.cosh(ev[0]), np.cosh(ev[1]), np.cosh(ev[2]))
    sx = (1.0 / (cx[0] * cx[0]), 1.0 / (cx[1] * cx[1]), 1.0 / (cx[2] * cx[2]))
    sv = (1.0 / (cv[0] * cv[0]), 1.0 / (cv[1] * cv[1]), 1.0 / (cv[2] * cv[2]))
    fb = (
        -G[0] * tx[0] - G[3] * tv[0],
        -G[1] * tx[1] - G[4] * tv[1],
        -G[2] * tx[2] - G[5] * tv[2],
    )
    F = (fb[0] + m_L * xd[2, 0], fb[1] + m_L * xd[2, 1], fb[2] + m_L * xd[2, 2] + m_L * g)
    f_L = _td(F, q)
    if measured:
        ev_dot = (
            (f_L * q[0] - m_L * xd[2, 0]) / m_L,
            (f_L * q[1] - m_L * xd[2, 1]) / m_L,
            (f_L * q[2] - m_L * xd[2, 2]) / m_L - g,
        )
    else:
        ev_dot = (fb[0] / m_L, fb[1] / m_L, fb[2] / m_L)
    F_dot = (
        -G[0] * sx[0] * ev[0] - G[3] * sv[0] * ev_dot[0] + m_L * xd[3, 0],
        -G[1] * sx[1] * ev[1] - G[4] * sv[1] * ev_dot[1] + m_L * xd[3, 1],
        -G[2] * sx[2] * ev[2] - G[5] * sv[2] * ev_dot[2] + m_L * xd[3, 2],
    )
    if measured:
        f_L_dot = _td(F_dot, q) + _td(F, q_dot)
        ev_ddot = (
            (f_L_dot * q[0] + f_L * q_dot[0] - m_L * xd[3, 0]) / m_L,
            (f_L_dot * q[1] + f_L * q_dot[1] - m_L * xd[3, 1]) / m_L,
            (f_L_dot * q[2] + f_L * q_dot[2] - m_L * xd[3, 2]) / m_L,
        )
    else:
        ev_ddot = (
            (F_dot[0] - m_L * xd[3, 0]) / m_L,
            (F_dot[1] - m_L * xd[3, 1]) / m_L,
            (F_dot[2] - m_L * xd[3, 2]) / m_L,
        )
    F_ddot = (
        -G[0] * (-2.0 * tx[0] * sx[0] * ev[0] * ev[0] + sx[0] * ev_dot[0])
        - G[3] * (-2.0 * tv[0] * sv[0] * ev_dot[0] * ev_dot[0] + sv[0] * ev_ddot[0])
        + m_L * xd[4, 0],
        -G[1] * (-2.0 * tx[1] * sx[1] * ev[1] * ev[1] + sx[1] * ev_dot[1])
        - G[4] * (-2.0 * tv[1] * sv[1] * ev_dot[1] * ev_dot[1] + sv[1] * ev_ddot[1])
        + m_L * xd[4, 1],
        -G[2] * (-2.0 * tx[2] * sx[2] * ev[2] * ev[2] + sx[2] * ev_dot[2])
        - G[5] * (-2.0 * tv[2] * sv[2] * ev_dot[2] * ev_dot[2] + sv[2] * ev_ddot[2])
        + m_L * xd[4, 2],
    )
    n = np.sqrt(_td(F, F))
    p = _tlin(1.0 / n, F, 0.0, F)
    n_dot = _td(p, F_dot)
    p_dot = _tlin(1.0 / n, F_dot, -n_dot / n, p)
    n_ddot = _td(p_dot, F_dot) + _td(p, F_ddot)
    p_ddot = (
        (F_ddot[0] - n_ddot * p[0] - 2.0 * n_dot * p_dot[0]) / n,
        (F_ddot[1] - n_ddot * p[1] - 2.0 * n_dot * p_dot[1]) / n,
        (F_ddot[2] - n_ddot * p[2] - 2.0 * n_dot * p_dot[2]) / n,
    )
    w_d = _tc(p, p_dot)
    w_d_dot = _tc(p, p_ddot)
    # q_d = -p
    e_L = L - Lt0
    margin_L = iota * iota - e_L * e_L
    f_c = (
        -k_pl * e_L
        - k_dl * (L_dot - Lt1)
        - (m_Q + m_L) / m_L * f_L
        - m_Q * L * _td(q_dot, q_dot)
        + m_Q * Lt2
        - k_a * e_L / margin_L
    )
    e_q = _tc(q, p)
    psi = 1.0 + _td(q, p)
    margin_q = rho * rho - psi
    qw = _td(q, w_d)
    qwd = _td(q, w_d_dot)
    kq = k_q + k_b / margin_q
    r = 2.0 * L_dot / L
    inner = (
        -kq * e_q[0] - k_w * (w[0] + qw * q[0] - w_d[0]) - qw * q_dot[0] - qwd * q[0] + w_d_dot[0] + r * w[0],
        -kq * e_q[1] - k_w * (w[1] + qw * q[1] - w_d[1]) - qw * q_dot[1] - qwd * q[1] + w_d_dot[1] + r * w[1],
        -kq * e_q[2] - k_w * (w[2] + qw * q[2] - w_d[2]) - qw * q_dot[2] - qwd * q[2] + w_d_dot[2] + r * w[2],
    )
    F_perp = _tc(q, inner)
    F_c = _tlin(-f_c, q, m_Q * L, F_perp)
    return F_c, f_L, margin_L, margin_q, n


@nb.njit(cache=True)
def closed_loop_forces(x_L, v_L, q, w, L, L_dot, xd, Lt, P, G, measured):
    """Commanded thrust vector F_c and winch force f_L, plus both barrier margins."""
    F_c, f_L, m_L, m_q, n = _forces(
        (x_L[0], x_L[1], x_L[2]), (v_L[0], v_L[1], v_L[2]), (q[0], q[1], q[2]),
        (w[0], w[1], w[2]), L, L_dot, xd, Lt[0], Lt[1], Lt[2], P, G, measured,
    )
    out = np.empty(3, dtype=q.dtype)
    out[0], out[1], out[2] = F_c
    return out, f_L, m_L, m_q, n


@nb.njit(cache=True)
def _xi_rhs_into(xi, xd, u, P, G, measured, out):
    m_Q, m_L, g = P[0], P[1], P[2]
    q = (xi[3], xi[4], xi[5])
    L = xi[6]
    w = (xi[10], xi[11], xi[12])
    L_dot = xi[13]
    q_dot = _tc(w, q)
    x_L = (xi[0] + L * q[0], xi[1] + L * q[1], xi[2] + L * q[2])
    v_L = (
        xi[7] + L_dot * q[0] + L * q_dot[0],
        xi[8] + L_dot * q[1] + L * q_dot[1],
        xi[9] + L_dot * q[2] + L * q_dot[2],
    )
    F_c, f_L, margin_L, margin_q, nF = _forces(
        x_L, v_L, q, w, L, L_dot, xd, xi[14], xi[15], xi[16], P, G, measured
    )
    qF = _tc(q, F_c)
    c = 1.0 / (m_Q * L)
    for i in range(3):
        out[i] = xi[7 + i]
        out[3 + i] = q_dot[i]
        out[7 + i] = (F_c[i] - f_L * q[i]) / m_Q
        out[10 + i] = (-qF[i] - 2.0 * m_Q * L_dot * w[i]) * c
    out[9] -= g
    out[6] = L_dot
    out[13] = ((m_Q + m_L) / m_L * f_L - _td(q, F_c) + m_Q * L * _td(q_dot, q_dot)) / m_Q
    for i in range(4):
        out[14 + i] = xi[15 + i]
    out[18] = u
    return margin_L.real > 0.0 and margin_q.real > 0.0 and nF.real > 1e-6 and L.real > 1e-3


@nb.njit(cache=True)
def xi_rhs(xi, xd, u, P, G, measured):
    """Generalized-state derivative under the reduced-attitude closed loop.

    Returns ``(xi_dot, ok)``; ``ok`` is False when a barrier or force
    threshold is violated, in which case ``xi_dot`` is meaningless.
    """
    out = np.empty_like(xi)
    ok = _xi_rhs_into(xi, xd, u, P, G, measured, out)
    return out, ok


@nb.njit(cache=True)
def rollout(xi0, U, xd, h, P, G, measured):
    """RK4 rollout of every lane of ``xi0`` under piecewise-constant ``U``.

    ``xd`` holds payload-reference derivatives at the 2N+1 half-interval
    times. Returns the node states ``(B, N+1, 19)`` and a per-lane flag.
    """
    B, N = U.shape
    n = xi0.shape[1]
    X = np.empty((B, N + 1, n), dtype=xi0.dtype)
    ok = np.ones(B, dtype=np.bool_)
    x = np.empty(n, dtype=xi0.dtype)
    y = np.empty(n, dtype=xi0.dtype)
    k1 = np.empty(n, dtype=xi0.dtype)
    k2 = np.empty(n, dtype=xi0.dtype)
    k3 = np.empty(n, dtype=xi0.dtype)
    k4 = np.empty(n, dtype=xi0.dtype)
    for b in range(B):
        x[:] = xi0[b]
        X[b, 0] = x
        for k in range(N):
            u = U[b, k]
            good = _xi_rhs_into(x, xd[2 * k], u, P, G, measured, k1)
            for i in range(n):
                y[i] = x[i] + 0.5 * h * k1[i]
            good &= _xi_rhs_into(y, xd[2 * k + 1], u, P, G, measured, k2)
            for i in range(n):
                y[i] = x[i] + 0.5 * h * k2[i]
            good &= _xi_rhs_into(y, xd[2 * k + 1], u, P, G, measured, k3)
            for i in range(n):
                y[i] = x[i] + h * k3[i]
            good &= _xi_rhs_into(y, xd[2 * k + 2], u, P, G, measured, k4)
            if not good:
                ok[b] = False
                for j in range(k + 1, N + 1):
                    X[b, j] = np.nan
                break
            for i in range(n):
                x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            X[b, k + 1] = x
    return X, ok


# --- plant ------------------------------------------------------------------


@nb.njit(cache=True)
def _plant_rhs(y, f, tau, f_L, P, J, J_inv, F_ext, freeze):
    m_Q, m_L, g = P[0], P[1], P[2]
    q = y[6:9]
    w = y[9:12]
    L = y[12]
    L_dot = y[13]
    R = y[14:23].reshape(3, 3)
    Om = y[23:26]
    T = f * R[:, 2]
    q_dot = _cross(w, q)
    qT = _cross(q, T)
    qF = _cross(q, F_ext)
    out = np.empty(26)
    L_ddot = ((m_Q + m_L) / m_L * f_L - _dot(q, T) + m_Q * L * _dot(q_dot, q_dot)) / m_Q
    L_ddot += _dot(q, F_ext) / m_L
    for i in range(3):
        out[i] = y[3 + i]
        out[3 + i] = f_L * q[i] / m_L + F_ext[i] / m_L
        out[6 + i] = q_dot[i]
        out[9 + i] = (-qT[i] - 2.0 * m_Q * L_dot * w[i]) / (m_Q * L) + qF[i] / (m_L * L)
    out[5] -= g
    out[12] = L_dot
    out[13] = L_ddot
    if freeze:
        out[14:26] = 0.0
    else:
        Rd = R @ np.array(
            [[0.0, -Om[2], Om[1]], [Om[2], 0.0, -Om[0]], [-Om[1], Om[0], 0.0]]
        )
        out[14:23] = Rd.reshape(9)
        JO = J @ Om
        out[23:26] = J_inv @ (tau - _cross(Om, JO))
    return out


@nb.njit(cache=True)
def _project(y):
    q = y[6:9] / np.sqrt(_dot(y[6:9], y[6:9]))
    y[6:9] = q
    y[9:12] = y[9:12] - _dot(q, y[9:12]) * q
    X = y[14:23].reshape(3, 3).copy()
    eye = np.eye(3)
    for _ in range(8):
        Gm = X.T @ X
        if np.max(np.abs(Gm - eye)) <= 1e-15:
            break
        X = X @ (1.5 * eye - 0.5 * Gm)
    y[14:23] = X.reshape(9)
    return y


@nb.njit(cache=True)
def plant_rk4(y, h, f, tau, f_L, P, J, J_inv, F0, Fh, F1, freeze):
    k1 = _plant_rhs(y, f, tau, f_L, P, J, J_inv, F0, freeze)
    k2 = _plant_rhs(y + 0.5 * h * k1, f, tau, f_L, P, J, J_inv, Fh, freeze)
    k3 = _plant_rhs(y + 0.5 * h * k2, f, tau, f_L, P, J, J_inv, Fh, freeze)
    k4 = _plant_rhs(y + h * k3, f, tau, f_L, P, J, J_inv, F1, freeze)
    y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y_next


@nb.njit(cache=True)
def plant_project(y):
    return _project(y.copy())
