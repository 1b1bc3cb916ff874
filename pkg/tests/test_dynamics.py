import numpy as np
import pytest

from cabletrack.dynamics import (
    ControlInput,
    PhysicalParams,
    SystemState,
    angular_momentum,
    cable_accelerations,
    quad_from_payload,
    reproject,
    rhs,
    rhs_vector,
    rk4_vector,
    step,
)
from cabletrack.errors import CableDegenerate, InvalidInput
from cabletrack.geometry import E3, axis_angle, cross, dot

from conftest import random_tangent, random_units

P = PhysicalParams()
HOVER_U = ControlInput(f=68.67, tau=np.zeros(3), f_L=-19.62)


def newton_euler_accelerations(q, omega, L, L_dot, thrust_vec, f_L, p):
    """Multirotor-coordinate oracle: Newton's law on both bodies, then the
    constraint x_L - x_Q = L q is differentiated twice."""
    a_L = (f_L[:, None] * q - p.m_L * p.g * E3) / p.m_L
    a_Q = (thrust_vec - f_L[:, None] * q - p.m_Q * p.g * E3) / p.m_Q
    d_dd = a_L - a_Q
    q_dot = np.cross(omega, q)
    L_dd = np.sum(q * d_dd, axis=1) + L * np.sum(q_dot * q_dot, axis=1)
    q_dd = (d_dd - L_dd[:, None] * q - 2 * L_dot[:, None] * q_dot) / L[:, None]
    return a_L, L_dd, np.cross(q, q_dd)


def random_states(rng, n):
    q = random_units(rng, n)
    omega = random_tangent(rng, q, 2.0)
    L = rng.uniform(0.3, 20.0, n)
    L_dot = rng.normal(size=n)
    R = np.array([axis_angle(v) for v in rng.normal(size=(n, 3))])
    f = rng.uniform(0.0, 150.0, n)
    f_L = rng.uniform(-60.0, 10.0, n)
    return q, omega, L, L_dot, f[:, None] * R[:, :, 2], f_L


def test_hover_is_equilibrium():
    s = SystemState.hover(x_L=[0, 0, 2], L=1.85)
    d = rhs(s, HOVER_U, P)
    for name in ("v_L", "q", "omega", "R", "Omega"):
        assert np.allclose(getattr(d, name), 0, atol=1e-12), name
    assert d.L == 0 and abs(d.L_dot) < 1e-12


def test_free_fall_rates():
    s = SystemState.hover(L=1.0)
    d = rhs(s, ControlInput(0.0, np.zeros(3), 0.0), P)
    assert np.allclose(d.v_L, [0, 0, -9.81], atol=1e-15)
    assert d.L_dot == 0 and np.allclose(d.omega, 0)


def test_hover_fixed_point_of_step():
    s = SystemState.hover(x_L=[1, -2, 3], L=1.85)
    y0 = s.to_vector()
    y = step(s, HOVER_U, P, 1e-3).to_vector()
    assert np.max(np.abs(y - y0)) <= 1e-12


def test_free_fall_one_second():
    s = SystemState.hover(L=1.0)
    y = s.to_vector()
    for _ in range(1000):
        y = rk4_vector(y, 1e-3, 0.0, np.zeros(3), 0.0, P)
    assert abs(y[5] + 9.81) < 1e-9


def test_oracle_equivalence_thousand_states(rng):
    q, omega, L, L_dot, T, f_L = random_states(rng, 1000)
    a, Ldd, wd = cable_accelerations(q, omega, L, L_dot, T, f_L, P)
    a_o, Ldd_o, wd_o = newton_euler_accelerations(q, omega, L, L_dot, T, f_L, P)
    for got, ref in ((a, a_o), (Ldd[:, None], Ldd_o[:, None]), (wd, wd_o)):
        err = np.linalg.norm(got - ref, axis=1)
        scale = np.maximum(np.linalg.norm(ref, axis=1), 1.0)
        assert np.max(err / scale) < 1e-8


def _inputs(t):
    f = 68.67 + 1.5 * np.sin(1.3 * t)
    tau = 1e-3 * np.array([np.sin(t), np.cos(0.7 * t), 0.5 * np.sin(2 * t)])
    f_L = -19.62 + 0.8 * np.cos(0.9 * t)
    return f, tau, f_L


def _cartesian_rhs(z, f, tau, f_L, p):
    x_L, v_L, x_Q, v_Q = z[0:3], z[3:6], z[6:9], z[9:12]
    R, W = z[12:21].reshape(3, 3), z[21:24]
    d = x_L - x_Q
    q = d / np.linalg.norm(d)
    out = np.empty_like(z)
    out[0:3] = v_L
    out[3:6] = (f_L * q - p.m_L * p.g * E3) / p.m_L
    out[6:9] = v_Q
    out[9:12] = (f * R[:, 2] - f_L * q - p.m_Q * p.g * E3) / p.m_Q
    Wh = np.array([[0, -W[2], W[1]], [W[2], 0, -W[0]], [-W[1], W[0], 0]])
    out[12:21] = (R @ Wh).reshape(9)
    out[21:24] = np.linalg.solve(p.J, tau - np.cross(W, p.J @ W))
    return out


def test_oracle_trajectory_five_seconds():
    q0 = axis_angle(np.array([0.2, -0.1, 0.0])) @ -E3
    s = SystemState(x_L=[0, 0, 2], v_L=[0.3, -0.1, 0.0], q=q0, omega=cross(q0, [0.1, 0.2, 0.3]),
                    L=2.0, L_dot=0.1, R=axis_angle(np.array([0.05, 0.02, 0.0])), Omega=[0.01, 0, 0])
    x_Q, v_Q = quad_from_payload(s)
    z = np.concatenate([s.x_L, s.v_L, x_Q, v_Q, s.R.reshape(9), s.Omega])
    y = s.to_vector()
    dt = 1e-3
    for k in range(5000):
        f, tau, f_L = _inputs(k * dt)
        y = rk4_vector(y, dt, f, tau, f_L, P)
        k1 = _cartesian_rhs(z, f, tau, f_L, P)
        k2 = _cartesian_rhs(z + dt / 2 * k1, f, tau, f_L, P)
        k3 = _cartesian_rhs(z + dt / 2 * k2, f, tau, f_L, P)
        k4 = _cartesian_rhs(z + dt * k3, f, tau, f_L, P)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    end = SystemState.from_vector(y)
    assert end.L > 1.0
    assert np.max(np.abs(end.x_L - z[0:3])) < 1e-6
    assert np.max(np.abs(quad_from_payload(end)[0] - z[6:9])) < 1e-6


def test_angular_momentum_relation():
    q0 = axis_angle(np.array([0.3, 0.0, 0.1])) @ -E3
    s = SystemState(x_L=[0, 0, 0], v_L=[0, 0, 0], q=q0, omega=cross(q0, [0.0, 0.5, 0.0]),
                    L=1.5, L_dot=0.2, R=axis_angle(np.array([0.1, 0.0, 0.0])), Omega=[0, 0.05, 0])
    u = ControlInput(70.0, np.zeros(3), -19.0)
    h = 1e-4
    y = s.to_vector()
    H = []
    states = []
    for _ in range(3):
        st_ = SystemState.from_vector(y)
        states.append(st_)
        H.append(angular_momentum(st_, P))
        y = rk4_vector(y, h, u.f, u.tau, u.f_L, P)
    fd = (H[2] - H[0]) / (2 * h)
    mid = states[1]
    model = -mid.L * np.cross(mid.q, u.f * mid.R[:, 2])
    assert np.linalg.norm(fd - model) <= 1e-5 * max(1.0, np.linalg.norm(model))


def test_quad_from_payload_examples():
    s = SystemState.hover(x_L=[0, 0, 2], L=1.85)
    assert np.allclose(quad_from_payload(s)[0], [0, 0, 3.85])
    s = SystemState(x_L=[0, 0, 0], v_L=[0, 0, 0], q=-E3, omega=[0, 0, 0], L=1.0, L_dot=0.3,
                    R=np.eye(3), Omega=[0, 0, 0])
    assert np.allclose(quad_from_payload(s)[1], [0, 0, 0.3])


def test_quad_velocity_matches_finite_difference():
    q0 = axis_angle(np.array([0.2, 0.3, 0.0])) @ -E3
    s = SystemState(x_L=[1, 2, 3], v_L=[0.5, -0.2, 0.1], q=q0, omega=cross(q0, [0.3, -0.4, 0.2]),
                    L=1.7, L_dot=-0.25, R=np.eye(3), Omega=[0, 0, 0])
    h = 1e-4
    y_prev = s.to_vector()
    y_mid = rk4_vector(y_prev, h, 69.0, np.zeros(3), -19.0, P)
    y_next = rk4_vector(y_mid, h, 69.0, np.zeros(3), -19.0, P)
    xa = quad_from_payload(SystemState.from_vector(y_prev))[0]
    xb = quad_from_payload(SystemState.from_vector(y_next))[0]
    v = quad_from_payload(SystemState.from_vector(y_mid))[1]
    assert np.linalg.norm((xb - xa) / (2 * h) - v) / np.linalg.norm(v) < 1e-6


def test_degenerate_cable_and_bad_step():
    s = SystemState.hover(L=1e-3)
    with pytest.raises(CableDegenerate):
        rhs(s, HOVER_U, P)
    with pytest.raises(InvalidInput):
        step(SystemState.hover(), HOVER_U, P, 0.02)
    with pytest.raises(InvalidInput):
        step(SystemState.hover(), HOVER_U, P, 0.0)


def test_state_invariants_enforced():
    with pytest.raises(InvalidInput):
        SystemState.hover(L=-1.0)
    with pytest.raises(InvalidInput):
        SystemState(x_L=[0, 0, 0], v_L=[0, 0, 0], q=-E3, omega=[0, 0, 1.0], L=1.0, L_dot=0.0,
                    R=np.eye(3), Omega=[0, 0, 0])


def test_compiled_step_matches_numpy_reference(rng):
    for _ in range(20):
        q = random_units(rng, 1)[0]
        s = SystemState(rng.normal(size=3), rng.normal(size=3), q, random_tangent(rng, q), 1.5, 0.2,
                        axis_angle(rng.normal(size=3)), rng.normal(size=3))
        y = s.to_vector()
        dt, f, tau, f_L = 1e-3, 70.0, rng.normal(size=3) * 0.1, -19.0
        k1 = rhs_vector(y, f, tau, f_L, P)
        k2 = rhs_vector(y + dt / 2 * k1, f, tau, f_L, P)
        k3 = rhs_vector(y + dt / 2 * k2, f, tau, f_L, P)
        k4 = rhs_vector(y + dt * k3, f, tau, f_L, P)
        ref = reproject(y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        assert np.array_equal(rk4_vector(y, dt, f, tau, f_L, P), ref)


def test_projection_keeps_manifold(rng):
    q = random_units(rng, 1)[0]
    s = SystemState(np.zeros(3), np.zeros(3), q, random_tangent(rng, q, 3.0), 1.0, 0.0,
                    axis_angle(rng.normal(size=3)), rng.normal(size=3))
    y = s.to_vector()
    for _ in range(2000):
        y = rk4_vector(y, 1e-3, 60.0, np.array([0.01, 0.0, -0.01]), -19.0, P)
    out = SystemState.from_vector(y)
    assert abs(np.linalg.norm(out.q) - 1) < 1e-12
    assert abs(dot(out.q, out.omega)) < 1e-12
    assert np.linalg.norm(out.R.T @ out.R - np.eye(3)) < 1e-12
