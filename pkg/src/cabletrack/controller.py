"""Four-layer backstepping controller.

Payload position -> cable length -> cable direction -> multirotor attitude.
The array-level laws (``*_law`` and :func:`virtual_forces`) are written to
accept stacked and complex-valued arrays: the cable-length generator
evaluates them in batches, and the controller differentiates the commanded
thrust vector along the model flow with a complex step.
"""

from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from .dynamics import ControlInput, cable_accelerations
from .errors import BarrierViolation, DegenerateForce, InvalidInput
from .geometry import (
    E1,
    E2,
    E3,
    cross,
    dot,
    hat,
    norm,
    s2_error,
    skew_part_vee,
    so3_error,
    transpose,
)

EPS_FORCE = 1e-6
EPS_PARALLEL = 1e-3
COMPLEX_STEP = 1e-30


@dataclass(frozen=True)
class Gains:
    """Controller gains. ``K_p``/``K_d`` hold the diagonals of the position gains.

    ``k_R`` and ``k_Omega`` are the effective attitude gains, i.e. the
    products k_R/eps^2 and k_Omega/eps.
    """

    K_p: np.ndarray = field(default_factory=lambda: np.array([4.0, 4.0, 5.0]))
    K_d: np.ndarray = field(default_factory=lambda: np.array([4.5, 4.5, 6.0]))
    k_pl: float = 4.0
    k_dl: float = 4.5
    k_a: float = 0.5
    k_q: float = 1.8
    k_w: float = 1.9
    k_b: float = 0.5
    iota: float = 0.25
    rho: float = float(np.sqrt(0.1))
    k_R: float = 1.92
    k_Omega: float = 0.3

    def __post_init__(self):
        for name in ("K_p", "K_d"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape == (3, 3):
                v = np.diag(v).copy()
            object.__setattr__(self, name, v.reshape(3))
        scalars = [getattr(self, f.name) for f in fields(self) if f.name not in ("K_p", "K_d")]
        if np.any(self.K_p <= 0) or np.any(self.K_d <= 0) or any(s <= 0 for s in scalars):
            raise InvalidInput("all gains must be positive")
        if not self.rho < 1.0:
            raise InvalidInput("rho must lie in (0, 1)")

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["K_p"] = d["K_p"].tolist()
        d["K_d"] = d["K_d"].tolist()
        return d


@dataclass(frozen=True)
class ReferenceSample:
    """Payload reference and desired cable-length chain at one instant.

    ``x_Ld[k]`` is the k-th time derivative of the payload reference and
    ``L_d[k]`` that of the desired cable length. Orders 0..4 are required;
    a 5th-order row is used when present (needed only for exact time
    derivatives of the commands) and treated as zero otherwise.
    """

    x_Ld: np.ndarray
    L_d: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x_Ld)
        L = np.asarray(self.L_d)
        if x.shape[0] == 5:
            x = np.vstack((x, np.zeros((1, 3), dtype=x.dtype)))
        if L.shape[0] == 5:
            L = np.append(L, np.zeros(1, dtype=L.dtype))
        if x.shape != (6, 3) or L.shape != (6,):
            raise InvalidInput("reference needs derivative orders 0..4 (optionally 5)")
        object.__setattr__(self, "x_Ld", x)
        object.__setattr__(self, "L_d", L)

    def advanced(self, h):
        """First-order shift by ``h`` (exact to first order; used with complex ``h``)."""
        x = self.x_Ld.copy() + 0j * h
        L = self.L_d.copy() + 0j * h
        x[:5] = self.x_Ld[:5] + h * self.x_Ld[1:]
        L[:5] = self.L_d[:5] + h * self.L_d[1:]
        return ReferenceSample(x, L, self.t)


@dataclass(frozen=True)
class CommandState:
    F_L: np.ndarray
    q_d: np.ndarray
    q_d_dot: np.ndarray
    q_d_ddot: np.ndarray
    omega_d: np.ndarray
    omega_d_dot: np.ndarray
    f_L: float
    f_c: float
    F_c: np.ndarray
    F_c_par: np.ndarray
    F_c_perp: np.ndarray
    F_c_dot: np.ndarray
    R_d: np.ndarray
    Omega_d: np.ndarray
    Omega_d_dot: np.ndarray
    Delta_L: np.ndarray
    e_x: np.ndarray
    e_v: np.ndarray
    e_L: float
    e_L_dot: float
    e_q: np.ndarray
    e_omega: np.ndarray
    psi_q: float
    e_R: np.ndarray
    e_Omega: np.ndarray

    @property
    def barrier_L(self):
        """Remaining length-barrier margin iota^2 - e_L^2 (set by the controller)."""
        return self._margins[0]

    @property
    def barrier_q(self):
        return self._margins[1]


class VirtualForces(NamedTuple):
    e_x: np.ndarray
    e_v: np.ndarray
    F_L: np.ndarray
    F_L_dot: np.ndarray
    F_L_ddot: np.ndarray
    q_d: np.ndarray
    q_d_dot: np.ndarray
    q_d_ddot: np.ndarray
    omega_d: np.ndarray
    omega_d_dot: np.ndarray
    f_L: np.ndarray
    e_L: np.ndarray
    e_L_dot: np.ndarray
    e_q: np.ndarray
    e_omega: np.ndarray
    psi_q: np.ndarray
    f_c: np.ndarray
    F_c_par: np.ndarray
    F_c_perp: np.ndarray
    F_c: np.ndarray


def _sech2(x):
    c = np.cosh(x)
    return 1.0 / (c * c)


def position_law(e_x, e_v, a_d, gains, params):
    """Saturated payload position law producing the virtual force F_L."""
    return (
        -gains.K_p * np.tanh(e_x)
        - gains.K_d * np.tanh(e_v)
        + params.m_L * a_d
        + params.m_L * params.g * E3
    )


def unit_derivatives(F, F_dot, F_ddot=None):
    """``p = F/|F|`` and its first (and optionally second) time derivative."""
    n = norm(F)[..., None]
    p = F / n
    n_dot = dot(p, F_dot)[..., None]
    p_dot = (F_dot - n_dot * p) / n
    if F_ddot is None:
        return p, p_dot, None
    n_ddot = dot(p_dot, F_dot)[..., None] + dot(p, F_ddot)[..., None]
    p_ddot = (F_ddot - n_ddot * p - 2.0 * n_dot * p_dot) / n
    return p, p_dot, p_ddot


def command_chain(e_x, e_v, q, omega, x_Ld, gains, params, coupling="measured"):
    """F_L with its first two time derivatives and the cable-direction commands.

    ``coupling="nominal"`` propagates the error dynamics with the coupling
    term Delta_L dropped; ``"measured"`` uses the realized payload force
    ``f_L q`` (available from the state, no acceleration measurement), which
    makes ``omega_d`` the exact rate of ``q_d`` along the true motion.
    """
    m_L = params.m_L
    a_d, j_d, s_d = x_Ld[..., 2, :], x_Ld[..., 3, :], x_Ld[..., 4, :]
    K_p, K_d = gains.K_p, gains.K_d
    tx, tv = np.tanh(e_x), np.tanh(e_v)
    F_L = -K_p * tx - K_d * tv + m_L * a_d + m_L * params.g * E3
    f_L = dot(F_L, q)
    q_dot = cross(omega, q)
    if coupling == "measured":
        e_v_dot = (f_L[..., None] * q - m_L * a_d - m_L * params.g * E3) / m_L
    elif coupling == "nominal":
        e_v_dot = (-K_p * tx - K_d * tv) / m_L
    else:
        raise InvalidInput(f"unknown coupling mode {coupling!r}")
    sx, sv = _sech2(e_x), _sech2(e_v)
    F_L_dot = -K_p * sx * e_v - K_d * sv * e_v_dot + m_L * j_d
    if coupling == "measured":
        f_L_dot = dot(F_L_dot, q) + dot(F_L, q_dot)
        e_v_ddot = (f_L_dot[..., None] * q + f_L[..., None] * q_dot - m_L * j_d) / m_L
    else:
        e_v_ddot = (F_L_dot - m_L * j_d) / m_L
    F_L_ddot = (
        -K_p * (-2.0 * tx * sx * e_v * e_v + sx * e_v_dot)
        - K_d * (-2.0 * tv * sv * e_v_dot * e_v_dot + sv * e_v_ddot)
        + m_L * s_d
    )
    p, p_dot, p_ddot = unit_derivatives(F_L, F_L_dot, F_L_ddot)
    omega_d = cross(p, p_dot)
    omega_d_dot = cross(p, p_ddot)
    return F_L, F_L_dot, F_L_ddot, -p, -p_dot, -p_ddot, omega_d, omega_d_dot, f_L


def length_law(e_L, e_L_dot, f_L, L, q_dot, L_d_ddot, gains, params):
    """Cable-length law f_c with the length barrier term."""
    m_Q, m_L = params.m_Q, params.m_L
    iota2 = gains.iota**2
    return (
        -gains.k_pl * e_L
        - gains.k_dl * e_L_dot
        - (m_Q + m_L) / m_L * f_L
        - m_Q * L * dot(q_dot, q_dot)
        + m_Q * L_d_ddot
        - gains.k_a * e_L / (iota2 - e_L * e_L)
    )


def direction_law(e_q, e_omega, psi_q, q, omega, L, L_dot, omega_d, omega_d_dot, gains, params):
    """Cable-direction law F_c_perp (always orthogonal to q)."""
    L = np.asarray(L)[..., None]
    L_dot = np.asarray(L_dot)[..., None]
    psi_q = np.asarray(psi_q)[..., None]
    q_dot = cross(omega, q)
    qq_wdd = dot(q, omega_d_dot)[..., None] * q - omega_d_dot  # hat(q)^2 omega_d_dot
    inner = (
        -gains.k_q * e_q
        - gains.k_w * e_omega
        - dot(q, omega_d)[..., None] * q_dot
        - qq_wdd
        + 2.0 * (L_dot / L) * omega
        - gains.k_b * e_q / (gains.rho**2 - psi_q)
    )
    return params.m_Q * L * cross(q, inner)


def virtual_forces(x_L, v_L, q, omega, L, L_dot, x_Ld, L_d, gains, params, coupling="measured"):
    """Evaluate the position, length and direction layers; no domain checks.

    ``x_Ld`` holds payload-reference derivatives (orders on axis -2) and
    ``L_d`` the desired-length chain (orders on the last axis).
    """
    e_x = x_L - x_Ld[..., 0, :]
    e_v = v_L - x_Ld[..., 1, :]
    F_L, F_L_dot, F_L_ddot, q_d, q_d_dot, q_d_ddot, omega_d, omega_d_dot, f_L = command_chain(
        e_x, e_v, q, omega, x_Ld, gains, params, coupling
    )
    e_L = L - L_d[..., 0]
    e_L_dot = L_dot - L_d[..., 1]
    q_dot = cross(omega, q)
    f_c = length_law(e_L, e_L_dot, f_L, L, q_dot, L_d[..., 2], gains, params)
    e_q, psi_q = s2_error(q_d, q)
    e_omega = omega + dot(q, omega_d)[..., None] * q - omega_d
    F_c_perp = direction_law(e_q, e_omega, psi_q, q, omega, L, L_dot, omega_d, omega_d_dot, gains, params)
    F_c_par = -f_c[..., None] * q
    return VirtualForces(
        e_x, e_v, F_L, F_L_dot, F_L_ddot, q_d, q_d_dot, q_d_ddot, omega_d, omega_d_dot, f_L,
        e_L, e_L_dot, e_q, e_omega, psi_q, f_c, F_c_par, F_c_perp, F_c_par + F_c_perp,
    )


def check_domains(vf, gains):
    """Raise if the real-valued layer outputs leave the controller's domain."""
    nF = float(np.linalg.norm(np.real(vf.F_L)))
    if nF < EPS_FORCE:
        raise DegenerateForce(f"position layer: |F_L| = {nF:.3e} N below threshold")
    margin_L = gains.iota**2 - float(np.real(vf.e_L)) ** 2
    if margin_L <= 0.0:
        raise BarrierViolation(
            f"cable_length layer: |e_L| = {abs(float(np.real(vf.e_L))):.6g} >= iota = {gains.iota}",
            layer="cable_length",
            margin=margin_L,
        )
    margin_q = gains.rho**2 - float(np.real(vf.psi_q))
    if margin_q <= 0.0:
        raise BarrierViolation(
            f"cable_direction layer: psi_q = {float(np.real(vf.psi_q)):.6g} >= rho^2 = {gains.rho**2:.6g}",
            layer="cable_direction",
            margin=margin_q,
        )
    nFc = float(np.linalg.norm(np.real(vf.F_c)))
    if nFc < EPS_FORCE:
        raise DegenerateForce(f"thrust layer: |F_c| = {nFc:.3e} N below threshold")
    return margin_L, margin_q


# --- op-level API -----------------------------------------------------------


def position_control(e_x, e_v, ref, gains, params, q):
    """Returns ``(F_L, q_d, f_L)``; ``ref`` is a ReferenceSample or the payload acceleration."""
    a_d = ref.x_Ld[2] if isinstance(ref, ReferenceSample) else np.asarray(ref, dtype=float)
    F_L = position_law(np.asarray(e_x, float), np.asarray(e_v, float), a_d, gains, params)
    n = float(np.linalg.norm(F_L))
    if n < EPS_FORCE:
        raise DegenerateForce(f"|F_L| = {n:.3e} N: desired cable direction undefined")
    return F_L, -F_L / n, float(F_L @ np.asarray(q, float))


def command_derivatives(state, ref, gains, params, coupling="measured"):
    """Returns ``(q_d_dot, q_d_ddot, omega_d, omega_d_dot)`` for the current state."""
    e_x = state.x_L - ref.x_Ld[0]
    e_v = state.v_L - ref.x_Ld[1]
    position_control(e_x, e_v, ref, gains, params, state.q)
    out = command_chain(e_x, e_v, state.q, state.omega, ref.x_Ld, gains, params, coupling)
    return out[4], out[5], out[6], out[7]


def cable_length_control(e_L, e_L_dot, f_L, state, ref, gains, params):
    """Returns ``(f_c, F_c_par)``; raises BarrierViolation outside |e_L| < iota."""
    if e_L * e_L >= gains.iota**2:
        raise BarrierViolation(
            f"|e_L| = {abs(e_L):.6g} >= iota = {gains.iota}",
            layer="cable_length",
            margin=gains.iota**2 - e_L * e_L,
        )
    q_dot = cross(state.omega, state.q)
    f_c = float(length_law(e_L, e_L_dot, f_L, state.L, q_dot, ref.L_d[2], gains, params))
    return f_c, -f_c * state.q


def cable_direction_control(e_q, e_omega, psi_q, state, omega_d, omega_d_dot, gains, params):
    if psi_q >= gains.rho**2:
        raise BarrierViolation(
            f"psi_q = {psi_q:.6g} >= rho^2 = {gains.rho**2:.6g}",
            layer="cable_direction",
            margin=gains.rho**2 - psi_q,
        )
    return direction_law(
        np.asarray(e_q, float), np.asarray(e_omega, float), psi_q, state.q, state.omega,
        state.L, state.L_dot, np.asarray(omega_d, float), np.asarray(omega_d_dot, float),
        gains, params,
    )


def assemble_thrust(F_c_par, F_c_perp, R):
    """Returns ``(F_c, f)`` with ``f`` the projection of F_c on the body z axis."""
    F_c = np.asarray(F_c_par, float) + np.asarray(F_c_perp, float)
    return F_c, float(F_c @ (np.asarray(R) @ E3))


def attitude_setpoint(F_c, F_c_dot=None, F_c_ddot=None, r_1a=E1):
    """Desired attitude from the thrust direction, with its body rate and acceleration.

    ``Omega_d`` needs ``F_c_dot`` and ``Omega_d_dot`` needs ``F_c_ddot``; the
    missing ones are returned as ``None``. Falls back to ``e2`` as heading
    reference when ``r_1a`` is nearly parallel to the thrust direction.
    """
    F_c = np.asarray(F_c, dtype=float)
    n = float(np.linalg.norm(F_c))
    if n < EPS_FORCE:
        raise DegenerateForce(f"|F_c| = {n:.3e} N: desired attitude undefined")
    zero = np.zeros(3)
    F_dot = zero if F_c_dot is None else np.asarray(F_c_dot, float)
    F_ddot = zero if F_c_ddot is None else np.asarray(F_c_ddot, float)
    r3, r3_dot, r3_ddot = unit_derivatives(F_c, F_dot, F_ddot)
    r_1a = np.asarray(r_1a, dtype=float)
    if np.linalg.norm(np.cross(r3, r_1a)) < EPS_PARALLEL:
        r_1a = E2 if r_1a is E1 or np.allclose(r_1a, E1) else E1
    b = cross(r3, r_1a)
    b_dot = cross(r3_dot, r_1a)
    b_ddot = cross(r3_ddot, r_1a)
    r2, r2_dot, r2_ddot = unit_derivatives(b, b_dot, b_ddot)
    r1 = cross(r2, r3)
    r1_dot = cross(r2_dot, r3) + cross(r2, r3_dot)
    r1_ddot = cross(r2_ddot, r3) + 2.0 * cross(r2_dot, r3_dot) + cross(r2, r3_ddot)
    R_d = np.column_stack((r1, r2, r3))
    if F_c_dot is None:
        return R_d, None, None
    R_d_dot = np.column_stack((r1_dot, r2_dot, r3_dot))
    Omega_d = skew_part_vee(R_d.T @ R_d_dot)
    if F_c_ddot is None:
        return R_d, Omega_d, None
    R_d_ddot = np.column_stack((r1_ddot, r2_ddot, r3_ddot))
    Omega_d_dot = skew_part_vee(R_d_dot.T @ R_d_dot + R_d.T @ R_d_ddot)
    return R_d, Omega_d, Omega_d_dot


def attitude_control(e_R, e_Omega, Omega, R, R_d, Omega_d, Omega_d_dot, gains, params):
    J = params.J
    RtRd = transpose(R) @ R_d
    return (
        -gains.k_R * np.asarray(e_R)
        - gains.k_Omega * np.asarray(e_Omega)
        + cross(Omega, J @ Omega)
        - J @ (hat(Omega) @ (RtRd @ Omega_d) - RtRd @ Omega_d_dot)
    )


def coupling_term(f_L, q, F_L):
    """Delta_L = f_L q - F_L."""
    return f_L * np.asarray(q) - np.asarray(F_L)


class BacksteppingController:
    """Stateful wrapper chaining all layers at a fixed sample period.

    The only memory is the filter that turns sampled ``Omega_d`` into
    ``Omega_d_dot`` (backward difference, first-order low-pass, saturation).
    """

    def __init__(
        self,
        gains,
        params,
        T_s=0.01,
        r_1a=E1,
        coupling="measured",
        omega_dot_tau=0.03,
        omega_dot_limit=50.0,
    ):
        self.gains = gains
        self.params = params
        self.T_s = T_s
        self.r_1a = r_1a
        self.coupling = coupling
        self.omega_dot_tau = omega_dot_tau
        self.omega_dot_limit = omega_dot_limit
        self.reset()

    def reset(self):
        self._Omega_d_prev = None
        self._Omega_d_dot = np.zeros(3)

    def thrust_rate(self, state, ref, f, f_L, reduced=False, F_c=None):
        """Time derivative of the commanded F_c along the model flow (complex step)."""
        R = state.R
        thrust_vec = F_c if reduced else f * R[:, 2]
        v_L_dot, L_ddot, omega_dot = cable_accelerations(
            state.q, state.omega, state.L, state.L_dot, thrust_vec, f_L, self.params
        )
        ih = 1j * COMPLEX_STEP
        vf = self._complex_forces(state, ref, v_L_dot, L_ddot, omega_dot, ih)
        return np.imag(vf.F_c) / COMPLEX_STEP

    def _complex_forces(self, state, ref, v_L_dot, L_ddot, omega_dot, ih):
        shifted = ref.advanced(ih)
        q_dot = cross(state.omega, state.q)
        return virtual_forces(
            state.x_L + ih * state.v_L,
            state.v_L + ih * v_L_dot,
            state.q + ih * q_dot,
            state.omega + ih * omega_dot,
            state.L + ih * state.L_dot,
            state.L_dot + ih * L_ddot,
            shifted.x_Ld,
            shifted.L_d,
            self.gains,
            self.params,
            self.coupling,
        )

    def _filter_omega_dot(self, Omega_d):
        if self._Omega_d_prev is not None:
            raw = (Omega_d - self._Omega_d_prev) / self.T_s
            a = self.T_s / (self.omega_dot_tau + self.T_s)
            self._Omega_d_dot = np.clip(
                self._Omega_d_dot + a * (raw - self._Omega_d_dot),
                -self.omega_dot_limit,
                self.omega_dot_limit,
            )
        self._Omega_d_prev = Omega_d
        return self._Omega_d_dot

    def step(self, state, ref, reduced=False):
        """One control update. Returns ``(ControlInput, CommandState)``.

        With ``reduced=True`` the attitude is assumed to equal its setpoint,
        so the thrust is ``|F_c|`` and the torque is zero.
        """
        g, p = self.gains, self.params
        vf = virtual_forces(
            state.x_L, state.v_L, state.q, state.omega, state.L, state.L_dot,
            ref.x_Ld, ref.L_d, g, p, self.coupling,
        )
        margin_L, margin_q = check_domains(vf, g)
        F_c = vf.F_c
        f_L = float(vf.f_L)
        if reduced:
            f = float(np.linalg.norm(F_c))
        else:
            f = float(F_c @ state.R[:, 2])
        F_c_dot = self.thrust_rate(state, ref, f, f_L, reduced=reduced, F_c=F_c)
        R_d, Omega_d, _ = attitude_setpoint(F_c, F_c_dot, None, self.r_1a)
        Omega_d_dot = self._filter_omega_dot(Omega_d)
        if reduced:
            R, Omega = R_d, Omega_d
            tau = np.zeros(3)
        else:
            R, Omega = state.R, state.Omega
        e_R, e_Omega = so3_error(R_d, R, Omega_d, Omega)
        if not reduced:
            tau = attitude_control(e_R, e_Omega, Omega, R, R_d, Omega_d, Omega_d_dot, g, p)
        cmd = CommandState(
            F_L=vf.F_L, q_d=vf.q_d, q_d_dot=vf.q_d_dot, q_d_ddot=vf.q_d_ddot,
            omega_d=vf.omega_d, omega_d_dot=vf.omega_d_dot, f_L=f_L, f_c=float(vf.f_c),
            F_c=F_c, F_c_par=vf.F_c_par, F_c_perp=vf.F_c_perp, F_c_dot=F_c_dot,
            R_d=R_d, Omega_d=Omega_d, Omega_d_dot=Omega_d_dot.copy(),
            Delta_L=coupling_term(f_L, state.q, vf.F_L),
            e_x=vf.e_x, e_v=vf.e_v, e_L=float(vf.e_L), e_L_dot=float(vf.e_L_dot),
            e_q=vf.e_q, e_omega=vf.e_omega, psi_q=float(vf.psi_q), e_R=e_R, e_Omega=e_Omega,
        )
        object.__setattr__(cmd, "_margins", (margin_L, margin_q))
        return ControlInput(f=f, tau=tau, f_L=f_L), cmd


def control_step(state, ref, gains, params, controller=None, reduced=False):
    """Single control update; a fresh controller is used unless one is given."""
    if controller is None:
        controller = BacksteppingController(gains, params)
    return controller.step(state, ref, reduced=reduced)
