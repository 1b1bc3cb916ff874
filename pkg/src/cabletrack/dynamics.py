"""Multirotor / variable-length cable / point-mass payload plant.

The state is expressed in payload coordinates: payload position and
velocity, cable direction ``q`` (from the multirotor toward the payload, so
a hanging payload has ``q = -e3``), cable angular velocity ``omega``, cable
length and rate, attitude ``R`` (body to world) and body rate ``Omega``.

Inputs are the collective thrust ``f`` along the body z axis, the body
torque ``tau`` and the winch force ``f_L`` applied to the payload along
``q`` (negative ``f_L`` means positive cable tension).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import CableDegenerate, InvalidInput
from .geometry import (
    E3,
    as_rotation,
    as_unit,
    cross,
    dot,
    hat,
    normalize,
    project_rotation,
    tangent_project,
)

STATE_SIZE = 26
_X_L = slice(0, 3)
_V_L = slice(3, 6)
_Q = slice(6, 9)
_OMEGA = slice(9, 12)
_L = 12
_LDOT = 13
_R = slice(14, 23)
_BODY_RATE = slice(23, 26)


@dataclass(frozen=True)
class PhysicalParams:
    m_Q: float = 5.0
    m_L: float = 2.0
    g: float = 9.81
    J: np.ndarray = field(default_factory=lambda: np.diag([0.05, 0.05, 0.06]))
    L_min: float = 1e-3

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if J.shape == (3,):
            J = np.diag(J)
        object.__setattr__(self, "J", J)
        if not (self.m_Q > 0 and self.m_L > 0):
            raise InvalidInput("masses must be positive")
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.min(np.linalg.eigvalsh(J)) <= 0:
            raise InvalidInput("inertia must be symmetric positive definite")
        object.__setattr__(self, "J_inv", np.linalg.inv(J))
        object.__setattr__(self, "packed", np.array([self.m_Q, self.m_L, self.g], dtype=float))

    def scaled(self, m_Q=1.0, m_L=1.0, J=(1.0, 1.0, 1.0)):
        """Copy with multiplicative parameter perturbations (J scaled per axis)."""
        Js = np.diag(J) @ self.J if np.ndim(J) == 1 else np.asarray(J) @ self.J
        return replace(self, m_Q=self.m_Q * m_Q, m_L=self.m_L * m_L, J=Js)


@dataclass(frozen=True)
class ControlInput:
    f: float
    tau: np.ndarray
    f_L: float

    def __post_init__(self):
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float).reshape(3))
        if not (np.isfinite(self.f) and np.isfinite(self.f_L) and np.all(np.isfinite(self.tau))):
            raise InvalidInput("control input must be finite")


@dataclass(frozen=True)
class SystemState:
    x_L: np.ndarray
    v_L: np.ndarray
    q: np.ndarray
    omega: np.ndarray
    L: float
    L_dot: float
    R: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        for name in ("x_L", "v_L", "omega", "Omega"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        object.__setattr__(self, "q", as_unit(np.reshape(self.q, 3)))
        object.__setattr__(self, "R", as_rotation(self.R))
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "L_dot", float(self.L_dot))
        if not self.L > 0:
            raise InvalidInput("cable length must be positive")
        if abs(float(self.q @ self.omega)) > 1e-8:
            raise InvalidInput("cable angular velocity must be orthogonal to q")

    def to_vector(self):
        y = np.empty(STATE_SIZE)
        y[_X_L] = self.x_L
        y[_V_L] = self.v_L
        y[_Q] = self.q
        y[_OMEGA] = self.omega
        y[_L] = self.L
        y[_LDOT] = self.L_dot
        y[_R] = self.R.reshape(9)
        y[_BODY_RATE] = self.Omega
        return y

    @classmethod
    def from_vector(cls, y):
        y = np.asarray(y, dtype=float)
        return cls(
            x_L=y[_X_L].copy(),
            v_L=y[_V_L].copy(),
            q=y[_Q].copy(),
            omega=y[_OMEGA].copy(),
            L=y[_L],
            L_dot=y[_LDOT],
            R=y[_R].reshape(3, 3).copy(),
            Omega=y[_BODY_RATE].copy(),
        )

    @classmethod
    def hover(cls, x_L=(0.0, 0.0, 0.0), L=1.0):
        return cls(
            x_L=np.asarray(x_L, dtype=float),
            v_L=np.zeros(3),
            q=-E3,
            omega=np.zeros(3),
            L=L,
            L_dot=0.0,
            R=np.eye(3),
            Omega=np.zeros(3),
        )


@dataclass(frozen=True)
class StateDerivative:
    x_L: np.ndarray
    v_L: np.ndarray
    q: np.ndarray
    omega: np.ndarray
    L: float
    L_dot: float
    R: np.ndarray
    Omega: np.ndarray


def cable_accelerations(q, omega, L, L_dot, thrust_vec, f_L, params, F_ext=None):
    """Translational part of the model for a given world-frame thrust vector.

    Returns ``(v_L_dot, L_ddot, omega_dot)``. ``F_ext`` is an optional
    world-frame force acting on the payload. Works on stacked and complex
    arrays.
    """
    m_Q, m_L, g = params.m_Q, params.m_L, params.g
    f_L = np.asarray(f_L)
    L = np.asarray(L)
    L_dot = np.asarray(L_dot)
    q_dot = cross(omega, q)
    v_L_dot = (f_L[..., None] * q) / m_L - g * E3
    L_ddot = ((m_Q + m_L) / m_L * f_L - dot(q, thrust_vec) + m_Q * L * dot(q_dot, q_dot)) / m_Q
    omega_dot = (-cross(q, thrust_vec) - 2.0 * m_Q * L_dot[..., None] * omega) / (m_Q * L[..., None])
    if F_ext is not None:
        v_L_dot = v_L_dot + F_ext / m_L
        L_ddot = L_ddot + dot(q, F_ext) / m_L
        omega_dot = omega_dot + cross(q, F_ext) / (m_L * L[..., None])
    return v_L_dot, L_ddot, omega_dot


def rhs_vector(y, f, tau, f_L, params, F_ext=None, freeze_attitude=False):
    """Time derivative of the packed state vector ``y``."""
    L = y[_L]
    if L <= params.L_min:
        raise CableDegenerate(f"cable length {L:.6g} m at or below L_min = {params.L_min} m")
    q = y[_Q]
    omega = y[_OMEGA]
    R = y[_R].reshape(3, 3)
    Omega = y[_BODY_RATE]
    thrust_vec = f * R[:, 2]
    v_L_dot, L_ddot, omega_dot = cable_accelerations(
        q, omega, L, y[_LDOT], thrust_vec, f_L, params, F_ext
    )
    dy = np.empty_like(y)
    dy[_X_L] = y[_V_L]
    dy[_V_L] = v_L_dot
    dy[_Q] = cross(omega, q)
    dy[_OMEGA] = omega_dot
    dy[_L] = y[_LDOT]
    dy[_LDOT] = L_ddot
    if freeze_attitude:
        dy[_R] = 0.0
        dy[_BODY_RATE] = 0.0
    else:
        dy[_R] = (R @ hat(Omega)).reshape(9)
        dy[_BODY_RATE] = params.J_inv @ (tau - cross(Omega, params.J @ Omega))
    return dy


def rhs(s, u, p, F_ext=None):
    """State derivative of the full model for state ``s`` and input ``u``."""
    dy = rhs_vector(s.to_vector(), u.f, u.tau, u.f_L, p, F_ext)
    return StateDerivative(
        x_L=dy[_X_L],
        v_L=dy[_V_L],
        q=dy[_Q],
        omega=dy[_OMEGA],
        L=dy[_L],
        L_dot=dy[_LDOT],
        R=dy[_R].reshape(3, 3),
        Omega=dy[_BODY_RATE],
    )


def reproject(y):
    """Map a packed state back onto S^2 x SO(3) with omega tangent to q."""
    y = y.copy()
    q = normalize(y[_Q])
    y[_Q] = q
    y[_OMEGA] = tangent_project(q, y[_OMEGA])
    y[_R] = project_rotation(y[_R].reshape(3, 3)).reshape(9)
    return y


def rk4_vector(y, dt, f, tau, f_L, params, F_ext=None, freeze_attitude=False):
    """One RK4 step on the packed state followed by manifold re-projection.

    ``F_ext`` may be a callable of the stage time offset (seconds) or a
    constant vector.
    """
    if not 0.0 < dt <= 0.01:
        raise InvalidInput("dt must lie in (0, 0.01] s")
    if callable(F_ext):
        F0, Fh, F1 = F_ext(0.0), F_ext(0.5 * dt), F_ext(dt)
    else:
        F0 = Fh = F1 = F_ext
    zero = np.zeros(3)
    F0, Fh, F1 = (zero if F is None else np.asarray(F, dtype=float) for F in (F0, Fh, F1))
    if y[_L] <= params.L_min:
        raise CableDegenerate(f"cable length {y[_L]:.6g} m at or below L_min = {params.L_min} m")
    y_next = _kernels.plant_rk4(
        np.asarray(y, dtype=float), float(dt), float(f), np.asarray(tau, dtype=float), float(f_L),
        params.packed, params.J, params.J_inv, F0, Fh, F1, bool(freeze_attitude),
    )
    if not y_next[_L] > params.L_min:
        raise CableDegenerate(f"cable length {y_next[_L]:.6g} m at or below L_min")
    return _kernels.plant_project(y_next)


def step(s, u, p, dt, F_ext=None):
    """Advance the state by ``dt`` with a held input (RK4 + re-projection)."""
    y = rk4_vector(s.to_vector(), dt, u.f, u.tau, u.f_L, p, F_ext)
    return SystemState.from_vector(y)


def quad_from_payload(s):
    """Multirotor position and velocity implied by the payload state."""
    x_Q = s.x_L - s.L * s.q
    v_Q = s.v_L - s.L_dot * s.q - s.L * cross(s.omega, s.q)
    return x_Q, v_Q


def payload_from_quad(x_Q, v_Q, q, omega, L, L_dot):
    """Inverse of :func:`quad_from_payload`; accepts stacked arrays."""
    L = np.asarray(L)[..., None]
    L_dot = np.asarray(L_dot)[..., None]
    x_L = x_Q + L * q
    v_L = v_Q + L_dot * q + L * cross(omega, q)
    return x_L, v_L


def angular_momentum(s, p):
    """Relative angular momentum of the multirotor about the payload, m_Q L^2 omega."""
    return p.m_Q * s.L**2 * s.omega
