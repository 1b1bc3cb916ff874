"""Receding-horizon cable-length generator.

The decision variable is the fifth derivative of the desired cable length,
held constant on each of N intervals. The generalized state (multirotor
position and velocity, cable direction, rate and length, and the quintic
chain ``Lt``) is propagated through the closed loop formed by the controller
laws and the reduced-attitude plant. The nonlinear least-squares problem is
solved by Gauss-Newton with bound-constrained subproblems, exact Jacobians
by complex step and a batched backtracking line search.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import lsq_linear

from . import _kernels
from .errors import BarrierViolation, DegenerateForce, InfeasibleInitial, InvalidInput

COMPLEX_STEP = 1e-30
CHAIN = 5


def _packed_gains(gains):
    return np.concatenate(
        (gains.K_p, gains.K_d,
         [gains.k_pl, gains.k_dl, gains.k_a, gains.k_q, gains.k_w, gains.k_b, gains.iota, gains.rho])
    ).astype(float)


@dataclass(frozen=True)
class GeneratorConfig:
    k1: float = 0.1
    k2: float = 100.0
    K: tuple = (0.0, 1.6, 3.2, 2.4, 0.8)
    k8: float = 0.1
    k9: float = 0.0
    k_z: float = 2.0
    Lt_lower: tuple = (0.5, -30.0, -30.0, -30.0, -30.0)
    Lt_upper: tuple = (25.0, 30.0, 30.0, 30.0, 30.0)
    u_lower: float = -50.0
    u_upper: float = 50.0
    z_band: tuple = None
    horizon: float = 2.0
    nodes: int = 20
    cost: str = "base"
    max_iter: int = 5
    penalty: float = 1e3
    penalty_max: float = 1e9
    tol: float = 1e-8

    def __post_init__(self):
        for name in ("K", "Lt_lower", "Lt_upper"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.z_band is not None:
            object.__setattr__(self, "z_band", tuple(float(v) for v in self.z_band))
        weights = (self.k1, self.k2, self.k8, self.k9, *self.K)
        if len(self.K) != CHAIN or len(self.Lt_lower) != CHAIN or len(self.Lt_upper) != CHAIN:
            raise InvalidInput("K and the Lt bounds need five entries")
        if min(weights) < 0 or self.k_z <= 0:
            raise InvalidInput("weights must be non-negative and k_z positive")
        if not self.horizon > 0 or self.nodes < 2 or self.max_iter < 1:
            raise InvalidInput("horizon must be positive, nodes >= 2, max_iter >= 1")
        if any(lo > hi for lo, hi in zip(self.Lt_lower, self.Lt_upper)) or self.u_lower > self.u_upper:
            raise InvalidInput("bounds must be ordered")
        if self.cost not in ("base", "altitude"):
            raise InvalidInput(f"unknown cost variant {self.cost!r}")
        if self.cost == "altitude" and (self.z_band is None or self.z_band[0] > self.z_band[1]):
            raise InvalidInput("altitude cost needs an ordered z_band")

    @property
    def dt(self):
        return self.horizon / self.nodes

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidInput(f"unknown generator settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class LtChain:
    """Desired cable length and its first four derivatives."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(CHAIN).copy()

    @classmethod
    def at_rest(cls, L):
        return cls(np.array([L, 0.0, 0.0, 0.0, 0.0]))

    def advanced(self, u, dt):
        """Exact integration of the chain over ``dt`` with constant fifth derivative ``u``."""
        return LtChain(advance_chain(self.values, u, dt))

    def with_top(self, u):
        """Six-entry L_d chain (orders 0..5) as consumed by the controller."""
        return np.append(self.values, u)


def advance_chain(Lt, u, dt):
    Lt = np.asarray(Lt, dtype=float)
    out = np.empty(CHAIN)
    for i in range(CHAIN):
        acc = 0.0
        for j in range(i, CHAIN):
            acc += Lt[j] * dt ** (j - i) / math.factorial(j - i)
        out[i] = acc + u * dt ** (CHAIN - i) / math.factorial(CHAIN - i)
    return out


@dataclass(frozen=True)
class GeneralizedState:
    x_Q: np.ndarray
    q: np.ndarray
    L: float
    v_Q: np.ndarray
    omega: np.ndarray
    L_dot: float
    Lt: np.ndarray

    def to_vector(self):
        return np.concatenate(
            (self.x_Q, self.q, [self.L], self.v_Q, self.omega, [self.L_dot], self.Lt)
        ).astype(float)

    @classmethod
    def from_vector(cls, xi):
        xi = np.asarray(xi, dtype=float)
        return cls(xi[0:3], xi[3:6], float(xi[6]), xi[7:10], xi[10:13], float(xi[13]), xi[14:19])

    @classmethod
    def from_system(cls, s, Lt):
        """Generalized state from a plant state and the generator's own chain."""
        x_Q = s.x_L - s.L * s.q
        v_Q = s.v_L - s.L_dot * s.q - s.L * np.cross(s.omega, s.q)
        Lt = Lt.values if isinstance(Lt, LtChain) else np.asarray(Lt, dtype=float)
        return cls(x_Q, s.q.copy(), s.L, v_Q, s.omega.copy(), s.L_dot, Lt.copy())


def _as_xi(xi):
    return xi.to_vector() if isinstance(xi, GeneralizedState) else np.asarray(xi, dtype=float)


def _check_domain(xi, xd, gains, params, measured):
    x_Q, q, L, v_Q, w, L_dot, Lt = xi[0:3], xi[3:6], xi[6], xi[7:10], xi[10:13], xi[13], xi[14:19]
    q_dot = np.cross(w, q)
    x_L = x_Q + L * q
    v_L = v_Q + L_dot * q + L * q_dot
    _, _, m_L, m_q, nF = _kernels.closed_loop_forces(
        x_L, v_L, q, w, L, L_dot, xd, Lt, params.packed, _packed_gains(gains), measured
    )
    if not nF > 1e-6:
        raise DegenerateForce(f"|F_L| = {nF:.3e} N")
    if not m_L > 0:
        raise BarrierViolation("cable_length layer: |e_L| >= iota", layer="cable_length", margin=m_L)
    if not m_q > 0:
        raise BarrierViolation("cable_direction layer: psi_q >= rho^2", layer="cable_direction", margin=m_q)


def xi_dynamics(xi, Xd, u, gains, params, coupling="measured"):
    """Time derivative of the generalized state under the embedded closed loop.

    ``Xd`` holds the payload-reference derivatives (orders 0..4 as rows).
    """
    xi = _as_xi(xi)
    Xd = np.asarray(Xd, dtype=float)[:5]
    measured = coupling == "measured"
    out, ok = _kernels.xi_rhs(xi, Xd, float(u), params.packed, _packed_gains(gains), measured)
    if not ok:
        _check_domain(xi, Xd, gains, params, measured)
    return out


def stage_cost(xi, u, cfg):
    xi = _as_xi(xi)
    v_Q, L_dot, Lt = xi[7:10], xi[13], xi[14:19]
    cost = cfg.k1 * float(v_Q @ v_Q) + cfg.k2 * L_dot**2 + float(Lt @ (np.asarray(cfg.K) * Lt))
    cost += cfg.k8 * u * u
    if cfg.cost == "altitude":
        cost += cfg.k9 * altitude_cost(xi[2], cfg)
    return cost


def altitude_cost(z, cfg):
    lo, hi = cfg.z_band
    return math.exp(cfg.k_z * (lo - z)) + math.exp(cfg.k_z * (z - hi))


def _residuals(X, U, cfg, penalty):
    """Stacked least-squares residuals for every lane; ``sum(r**2)`` is the objective."""
    d = cfg.dt
    S = X[:, 1:, :]
    parts = [
        math.sqrt(d * cfg.k1) * S[..., 7:10],
        math.sqrt(d * cfg.k2) * S[..., 13:14],
        np.sqrt(d * np.asarray(cfg.K)) * S[..., 14:19],
        math.sqrt(d * cfg.k8) * U[..., None],
    ]
    if cfg.cost == "altitude":
        lo, hi = cfg.z_band
        z = S[..., 2:3]
        parts.append(math.sqrt(d * cfg.k9) * np.exp(0.5 * cfg.k_z * (lo - z)))
        parts.append(math.sqrt(d * cfg.k9) * np.exp(0.5 * cfg.k_z * (z - hi)))
    Lt = S[..., 14:19]
    lo = np.asarray(cfg.Lt_lower)
    hi = np.asarray(cfg.Lt_upper)
    over = np.where(np.real(Lt) > hi, Lt - hi, 0.0)
    under = np.where(np.real(Lt) < lo, lo - Lt, 0.0)
    parts.append(math.sqrt(penalty) * (over + under))
    B = X.shape[0]
    return np.concatenate([p.reshape(B, -1) for p in parts], axis=1)


def _violation(X, cfg):
    Lt = X[:, 1:, 14:19]
    over = np.maximum(Lt - np.asarray(cfg.Lt_upper), 0.0)
    under = np.maximum(np.asarray(cfg.Lt_lower) - Lt, 0.0)
    return float(np.max(over + under, initial=0.0))


@dataclass
class HorizonSolution:
    u: np.ndarray
    xi: np.ndarray
    objective: float
    warm_objective: float
    iterations: int
    max_violation: float
    converged: bool
    flags: list = field(default_factory=list)

    @property
    def Lt_traj(self):
        return self.xi[:, 14:19]


class _Problem:
    def __init__(self, xi0, Xd, cfg, gains, params, coupling, penalty):
        self.xi0 = _as_xi(xi0)
        self.Xd = np.ascontiguousarray(np.asarray(Xd, dtype=float)[:, :5, :])
        if self.Xd.shape[0] != 2 * cfg.nodes + 1:
            raise InvalidInput("Xd_traj must hold 2N+1 samples (nodes and interval midpoints)")
        self.Xd_c = self.Xd.astype(complex)
        self.cfg = cfg
        self.P = params.packed
        self.G = _packed_gains(gains)
        self.measured = coupling == "measured"
        self.penalty = penalty

    def evaluate(self, U):
        """Objectives of a batch of control sequences (inf where the rollout leaves the domain)."""
        U = np.atleast_2d(U)
        xi0 = np.repeat(self.xi0[None], U.shape[0], axis=0)
        X, ok = _kernels.rollout(xi0, U, self.Xd, self.cfg.dt, self.P, self.G, self.measured)
        r = _residuals(X, U, self.cfg, self.penalty)
        obj = np.where(ok, np.sum(r * r, axis=1), np.inf)
        return np.where(np.isfinite(obj), obj, np.inf), X

    def linearize(self, U):
        N = U.shape[0]
        Uc = np.repeat(U[None].astype(complex), N, axis=0)
        Uc[np.arange(N), np.arange(N)] += 1j * COMPLEX_STEP
        xi0 = np.repeat(self.xi0[None].astype(complex), N, axis=0)
        X, ok = _kernels.rollout(xi0, Uc, self.Xd_c, self.cfg.dt, self.P, self.G, self.measured)
        R = _residuals(X, Uc, self.cfg, self.penalty)
        return np.real(R[0]), (np.imag(R) / COMPLEX_STEP).T, bool(np.all(ok))


def solve_horizon(xi0, Xd_traj, cfg, gains, params, warm=None, coupling="measured", penalty=None):
    """Gauss-Newton solve of the horizon problem from the warm start ``warm``.

    ``Xd_traj`` has shape (2N+1, >=5, 3): payload-reference derivatives at the
    nodes and interval midpoints. Never returns an objective above the warm
    start's.
    """
    xi0 = _as_xi(xi0)
    N = cfg.nodes
    penalty = cfg.penalty if penalty is None else penalty
    prob = _Problem(xi0, Xd_traj, cfg, gains, params, coupling, penalty)
    measured = prob.measured
    _, ok0 = _kernels.xi_rhs(xi0, prob.Xd[0], 0.0, prob.P, prob.G, measured)
    if not ok0:
        try:
            _check_domain(xi0, prob.Xd[0], gains, params, measured)
        except (BarrierViolation, DegenerateForce) as exc:
            raise InfeasibleInitial(str(exc)) from exc
        raise InfeasibleInitial("initial generalized state outside the controller domain")

    lb = np.full(N, float(cfg.u_lower))
    ub = np.full(N, float(cfg.u_upper))
    U = np.zeros(N) if warm is None else np.clip(np.asarray(warm, dtype=float).reshape(N), lb, ub)
    objs, Xs = prob.evaluate(np.vstack((U, np.zeros(N))))
    warm_obj = float(objs[0])
    flags = []
    if np.isfinite(warm_obj):
        f, X = warm_obj, Xs[0]
    elif np.isfinite(objs[1]):
        U = np.zeros(N)
        f, X = float(objs[1]), Xs[1]
        flags.append("warm start infeasible; restarted from zero")
    else:
        return HorizonSolution(U, Xs[0], np.inf, warm_obj, 0, np.inf, False, ["no feasible rollout"])

    alphas = 0.5 ** np.arange(8)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        r, J, _ = prob.linearize(U)
        mu = 1e-12 * max(1.0, float(np.sum(J * J)))
        A = np.vstack((J, math.sqrt(mu) * np.eye(N)))
        b = np.concatenate((-r, np.zeros(N)))
        step = lsq_linear(A, b, bounds=(lb - U, ub - U), method="bvls").x
        step = np.clip(U + step, lb, ub) - U
        g = 2.0 * (J.T @ r)
        slope = float(g @ step)
        if slope >= 0.0 or np.max(np.abs(step)) < 1e-12:
            converged = True
            break
        cand = U[None] + alphas[:, None] * step[None]
        cobj, cX = prob.evaluate(cand)
        accept = np.nonzero(cobj <= f + 1e-4 * alphas * slope)[0]
        if accept.size == 0:
            converged = True
            break
        j = int(accept[0])
        f_new = float(cobj[j])
        U, X = cand[j], cX[j]
        if f - f_new <= cfg.tol * (1.0 + f):
            f = f_new
            converged = True
            break
        f = f_new
    if not converged:
        flags.append("max iterations reached")
    return HorizonSolution(U, X, f, warm_obj, it, _violation(X[None], cfg), converged, flags)


@dataclass
class GeneratorState:
    """Warm-start memory of one generator instance."""

    Lt: LtChain
    u_warm: np.ndarray
    penalty: float

    @classmethod
    def initial(cls, L0, cfg):
        return cls(LtChain.at_rest(L0), np.zeros(cfg.nodes), cfg.penalty)


def horizon_times(t, cfg):
    return t + 0.5 * cfg.dt * np.arange(2 * cfg.nodes + 1)


def generator_step(xi_measured, Xd_traj, cfg, gen_state, gains, params, T_s=0.01, coupling="measured"):
    """Re-solve, hand the current chain to the controller and advance it by ``T_s``.

    Returns ``(L_chain, solution)`` where ``L_chain`` holds orders 0..5 of the
    desired cable length at the current instant.
    """
    xi = _as_xi(xi_measured).copy()
    xi[14:19] = gen_state.Lt.values
    sol = solve_horizon(xi, Xd_traj, cfg, gains, params, gen_state.u_warm, coupling, gen_state.penalty)
    if sol.max_violation > 1e-6:
        gen_state.penalty = min(2.0 * gen_state.penalty, cfg.penalty_max)
    u0 = float(sol.u[0])
    chain = gen_state.Lt.with_top(u0)
    gen_state.Lt = gen_state.Lt.advanced(u0, T_s)
    gen_state.u_warm = shift_controls(sol.u, T_s, cfg.dt)
    return chain, sol


def shift_controls(u, T_s, dt):
    """Warm start for the next solve: the sequence re-sampled ``T_s`` later."""
    N = len(u)
    idx = np.minimum(np.floor((np.arange(N) * dt + T_s) / dt + 1e-9).astype(int), N - 1)
    return np.asarray(u)[idx]


class CableLengthGenerator:
    """One generator instance per simulation, fed with measured plant states."""

    def __init__(self, cfg, gains, params, reference, L0, T_s=0.01, coupling="measured"):
        self.cfg = cfg
        self.gains = gains
        self.params = params
        self.reference = reference
        self.T_s = T_s
        self.coupling = coupling
        self.state = GeneratorState.initial(L0, cfg)

    def step(self, s, t):
        xi = GeneralizedState.from_system(s, self.state.Lt)
        Xd = self.reference.payload(horizon_times(t, self.cfg))
        return generator_step(
            xi, Xd, self.cfg, self.state, self.gains, self.params, self.T_s, self.coupling
        )
