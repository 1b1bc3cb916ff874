"""Runtime stability monitors.

Evaluates the Lyapunov and barrier functions of the closed loop, the gain
matrices behind the decay rates, and checks the inequalities the
stability argument relies on along logged trajectories.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BarrierViolation, GainSelectionError
from .geometry import cross, dot, norm

DECAY_TOL = 1e-6
INEQ_TOL = 1e-9


def _is_pd(M):
    """Sylvester's criterion for a symmetric 2x2 matrix."""
    return M[0, 0] > 0 and np.linalg.det(M) > 0


@dataclass(frozen=True)
class StabilityGains:
    beta_L: float
    beta_q: float
    alpha_L: float
    alpha_q: float
    C_omega: float
    N_L: np.ndarray
    W_L: np.ndarray
    N_q1: np.ndarray
    N_q2: np.ndarray
    W_q: np.ndarray
    k_f: float
    c_f: float
    Gamma: float

    def to_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else float(v)
        return out


def beta_bounds(gains, params, C_omega):
    """Upper bounds of the admissible cross-term weights (beta_L, beta_q)."""
    m_Q = params.m_Q
    bL = min(np.sqrt(gains.k_pl / m_Q), 4 * gains.k_pl * gains.k_dl / (4 * m_Q * gains.k_pl + gains.k_dl**2))
    bq = min(np.sqrt(gains.k_q), 4 * gains.k_q * gains.k_w / (4 * gains.k_q + (gains.k_w + C_omega) ** 2))
    return float(bL), float(bq)


def select_stability_gains(gains, params, C_omega_est=0.0, Gamma=None):
    """Assemble the certificate matrices with beta at half its admissible bound.

    ``Gamma`` bounds |m_L a_d + m_L g e3| over the reference; it defaults to
    the hover value m_L g.
    """
    if C_omega_est < 0:
        raise GainSelectionError("C_omega estimate must be non-negative")
    m_Q = params.m_Q
    k_pl, k_dl, k_q, k_w, rho = gains.k_pl, gains.k_dl, gains.k_q, gains.k_w, gains.rho
    bL, bq = beta_bounds(gains, params, C_omega_est)
    beta_L, beta_q = 0.5 * bL, 0.5 * bq
    N_L = np.array([[k_pl / m_Q, beta_L], [beta_L, 1.0]])
    W_L = np.array(
        [[beta_L * k_pl / m_Q, beta_L * k_dl / (2 * m_Q)], [beta_L * k_dl / (2 * m_Q), k_dl / m_Q - beta_L]]
    )
    N_q1 = np.array([[k_q, -beta_q], [-beta_q, 1.0]])
    N_q2 = np.array([[2 * k_q / (2 - rho**2), beta_q], [beta_q, 1.0]])
    off = -0.5 * beta_q * (k_w + C_omega_est)
    W_q = np.array([[beta_q * k_q, off], [off, k_w - beta_q]])
    for name, M in (("N_L", N_L), ("W_L", W_L), ("N_q1", N_q1), ("N_q2", N_q2), ("W_q", W_q)):
        if not _is_pd(M):
            raise GainSelectionError(f"{name} is not positive definite for these gains")
    ev = np.linalg.eigvalsh
    alpha_L = min(2 * ev(W_L)[0] / ev(N_L)[-1], 2 * beta_L)
    alpha_q = min(2 * ev(W_q)[0] / ev(N_q2)[-1], beta_q * (2 - rho**2))
    lam = float(max(np.max(gains.K_p), np.max(gains.K_d)))
    if Gamma is None:
        Gamma = params.m_L * params.g
    return StabilityGains(
        beta_L=beta_L, beta_q=beta_q, alpha_L=float(alpha_L), alpha_q=float(alpha_q),
        C_omega=float(C_omega_est), N_L=N_L, W_L=W_L, N_q1=N_q1, N_q2=N_q2, W_q=W_q,
        k_f=2 * np.sqrt(2) * lam, c_f=float(Gamma) / (np.sqrt(2) * lam), Gamma=float(Gamma),
    )


def V1(e_x, e_v, gains, m_L):
    e_x = np.asarray(e_x, dtype=float)
    e_v = np.asarray(e_v, dtype=float)
    # ln cosh(x) = |x| + log1p(exp(-2|x|)) - ln 2, stable for large |x|
    a = np.abs(e_x)
    lncosh = a + np.log1p(np.exp(-2 * a)) - np.log(2.0)
    return np.sum(gains.K_p * lncosh, axis=-1) / m_L + 0.5 * np.sum(e_v * e_v, axis=-1)


def V1_dot(e_v, Delta_L, gains, m_L):
    """Rate of V1 along the true closed loop (coupling included)."""
    e_v = np.asarray(e_v, dtype=float)
    return (-np.sum(e_v * gains.K_d * np.tanh(e_v), axis=-1) + np.sum(e_v * Delta_L, axis=-1)) / m_L


def _check_L(e_L, gains):
    e_L = np.asarray(e_L, dtype=float)
    if np.any(e_L * e_L >= gains.iota**2):
        raise BarrierViolation("cable_length layer: |e_L| >= iota", layer="cable_length")


def _check_q(psi_q, gains):
    if np.any(np.asarray(psi_q) >= gains.rho**2):
        raise BarrierViolation("cable_direction layer: psi_q >= rho^2", layer="cable_direction")


def V2(e_L, e_L_dot, sg, gains, m_Q):
    _check_L(e_L, gains)
    e_L = np.asarray(e_L, dtype=float)
    e_L_dot = np.asarray(e_L_dot, dtype=float)
    i2 = gains.iota**2
    return (
        gains.k_pl / (2 * m_Q) * e_L**2
        + sg.beta_L * e_L * e_L_dot
        + 0.5 * e_L_dot**2
        + gains.k_a / (2 * m_Q) * np.log(i2 / (i2 - e_L**2))
    )


def V3(e_q, e_omega, psi_q, sg, gains):
    _check_q(psi_q, gains)
    r2 = gains.rho**2
    psi_q = np.asarray(psi_q, dtype=float)
    return (
        gains.k_q * psi_q
        + 0.5 * dot(e_omega, e_omega)
        + sg.beta_q * dot(e_q, e_omega)
        + gains.k_b * np.log(r2 / (r2 - psi_q))
    )


def C_omega_of(q, omega_d):
    """Instantaneous |(2I - q q^T) omega_d|."""
    return norm(2.0 * omega_d - dot(q, omega_d)[..., None] * q)


def e_q_dot(q, q_d, omega, omega_d):
    """Closed-form rate of e_q = q_d x q (needs q.omega = 0 and q_d.omega_d = 0)."""
    e_q = cross(q_d, q)
    c = dot(q, q_d)[..., None]
    qwd = dot(q, omega_d)[..., None]
    e_w = omega + qwd * q - omega_d
    qq_wd = qwd * q - omega_d
    return e_w * c - qwd * c * q + cross(e_w, e_q) + cross(omega_d - qq_wd, e_q)


def direction_rate_margin(q, q_d, omega, omega_d, C_omega=None):
    """``|e_w|^2 + C_w |e_q||e_w| - e_q_dot . e_w``; non-negative by construction.

    ``C_omega`` defaults to the instantaneous value, the tightest admissible one.
    """
    e_q = cross(q_d, q)
    e_w = omega + dot(q, omega_d)[..., None] * q - omega_d
    if C_omega is None:
        C_omega = C_omega_of(q, omega_d)
    lhs = dot(e_q_dot(q, q_d, omega, omega_d), e_w)
    return dot(e_w, e_w) + C_omega * norm(e_q) * norm(e_w) - lhs


def coupling_margin(Delta_L, F_L, e_q):
    """``|F_L||e_q| - |Delta_L|``."""
    return norm(F_L) * norm(e_q) - norm(Delta_L)


def growth_margin(F_L, e_x, e_v, sg):
    """Slack in the linear-growth bound on F_L in terms of z_x = (e_x, e_v)."""
    z = np.sqrt(dot(e_x, e_x) + dot(e_v, e_v))
    return sg.k_f * np.maximum(z, sg.c_f) - norm(F_L)


def reference_gamma(reference, duration, m_L, g, dt=1e-3):
    """sup |m_L a_d + m_L g e3| over a dense time grid."""
    t = np.arange(0.0, duration + dt / 2, dt)
    a = reference.payload(t)[:, 2, :]
    a[:, 2] += g
    return float(m_L * np.max(np.linalg.norm(a, axis=1)))


def reference_C_omega(reference, duration, params, headroom=0.2, dt=1e-3):
    """C_omega induced by the reference alone (zero tracking errors), with headroom.

    With zero errors F_L = m_L (a_d + g e3) and q = q_d, where
    |(2I - q q^T) omega_d| = 2 |omega_d|.
    """
    t = np.arange(0.0, duration + dt / 2, dt)
    X = reference.payload(t)
    F = params.m_L * X[:, 2, :]
    F[:, 2] += params.m_L * params.g
    F_dot = params.m_L * X[:, 3, :]
    n = np.linalg.norm(F, axis=1, keepdims=True)
    p = F / n
    p_dot = (F_dot - np.sum(p * F_dot, axis=1, keepdims=True) * p) / n
    w = np.linalg.norm(np.cross(p, p_dot), axis=1)
    return float((1.0 + headroom) * 2.0 * np.max(w))


def centered_rate(v, t):
    """Centered differences (one-sided at the ends)."""
    return np.gradient(np.asarray(v, dtype=float), np.asarray(t, dtype=float))


@dataclass
class CheckResult:
    name: str
    asserted: bool
    passed: bool
    worst: float
    index: int
    time: float
    note: str = ""

    def to_dict(self):
        return {
            "asserted": self.asserted,
            "passed": bool(self.passed),
            "worst_margin": float(self.worst),
            "index": int(self.index),
            "time": float(self.time),
            "note": self.note,
        }


@dataclass
class MonitorReport:
    t: np.ndarray
    series: dict
    checks: list = field(default_factory=list)
    stability: StabilityGains = None

    @property
    def passed(self):
        return all(c.passed for c in self.checks if c.asserted)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if c.asserted and not c.passed]

    def summary(self):
        return {
            "passed": self.passed,
            "checks": {c.name: c.to_dict() for c in self.checks},
            "stability_gains": None if self.stability is None else self.stability.to_dict(),
        }

    def to_json(self, path=None):
        text = json.dumps(self.summary(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path):
        names = list(self.series)
        with open(path, "w") as fh:
            fh.write("t," + ",".join(names) + "\n")
            for i, t in enumerate(self.t):
                fh.write(repr(float(t)) + "," + ",".join(repr(float(self.series[n][i])) for n in names) + "\n")


def _add(report, name, margin, tol, asserted, note=""):
    margin = np.asarray(margin, dtype=float)
    if margin.size == 0:
        report.checks.append(CheckResult(name, asserted, True, np.inf, -1, np.nan, note))
        return
    bad = ~np.isfinite(margin)
    m = np.where(bad, -np.inf, margin)
    i = int(np.argmin(m))
    passed = bool(np.all(m >= -tol))
    report.checks.append(CheckResult(name, asserted, passed, float(m[i]), i, float(report.t[i]), note))


def certify_trajectory(log, sg, gains, params, mode="full", disturbed=False, noisy=False, C_omega_est=None):
    """Evaluate every monitor along a logged trajectory.

    ``log`` maps column names to arrays (vector quantities as ``(n, 3)``):
    t, e_x, e_v, e_L, e_L_dot, e_q, e_omega, psi_q, q, q_d, omega, omega_d,
    F_L, Delta_L. Decay inequalities are asserted only in reduced mode; the
    V1 rate identity only for undisturbed runs. With measurement noise
    (``noisy``) the commands come from the noisy state while the errors are
    true ones, so the coupling and growth bounds are reported, not asserted.
    ``C_omega_est`` is the a priori estimate checked against the logged
    supremum (defaults to the value inside ``sg``).
    """
    t = np.asarray(log["t"], dtype=float)
    e_x, e_v = log["e_x"], log["e_v"]
    e_L, e_L_dot = np.asarray(log["e_L"]), np.asarray(log["e_L_dot"])
    e_q, e_w, psi = log["e_q"], log["e_omega"], np.asarray(log["psi_q"])
    report = MonitorReport(t=t, series={}, stability=sg)
    s = report.series

    s["barrier_L"] = gains.iota**2 - e_L**2
    s["barrier_q"] = gains.rho**2 - psi
    _add(report, "barrier_L", s["barrier_L"], 0.0, True)
    report.checks[-1].passed = bool(np.all(s["barrier_L"] > 0))
    _add(report, "barrier_q", s["barrier_q"], 0.0, True)
    report.checks[-1].passed = bool(np.all(s["barrier_q"] > 0))

    inside = (s["barrier_L"] > 0) & (s["barrier_q"] > 0)
    s["V1"] = V1(e_x, e_v, gains, params.m_L)
    s["V2"] = np.full(len(t), np.nan)
    s["V3"] = np.full(len(t), np.nan)
    s["V2"][inside] = V2(e_L[inside], e_L_dot[inside], sg, gains, params.m_Q)
    s["V3"][inside] = V3(e_q[inside], e_w[inside], psi[inside], sg, gains)
    s["V1_dot"] = centered_rate(s["V1"], t)
    s["V1_dot_model"] = V1_dot(e_v, log["Delta_L"], gains, params.m_L)
    s["V2_dot"] = centered_rate(s["V2"], t)
    s["V3_dot"] = centered_rate(s["V3"], t)
    s["decay_L"] = -(s["V2_dot"] + sg.alpha_L * s["V2"])
    s["decay_q"] = -(s["V3_dot"] + sg.alpha_q * s["V3"])
    reduced = mode == "reduced"
    note = "" if reduced else "reported only: the decay argument assumes R = R_d"
    _add(report, "decay_V2", s["decay_L"][1:-1], DECAY_TOL, reduced, note)
    _add(report, "decay_V3", s["decay_q"][1:-1], DECAY_TOL, reduced, note)

    # V1 rate identity; derivative jumps at the zero-order-hold instants set the tolerance
    scale = 1e-3 + 0.05 * np.abs(s["V1_dot_model"])
    s["V1_identity"] = scale - np.abs(s["V1_dot"] - s["V1_dot_model"])
    _add(report, "V1_rate_identity", s["V1_identity"][1:-1], 0.0, not disturbed,
         "" if not disturbed else "reported only: disturbances enter the payload dynamics")

    s["coupling"] = coupling_margin(log["Delta_L"], log["F_L"], e_q)
    noise_note = "reported only: commands computed from noisy measurements" if noisy else ""
    _add(report, "coupling_bound", s["coupling"], INEQ_TOL, not noisy, noise_note)
    s["growth"] = growth_margin(log["F_L"], e_x, e_v, sg)
    _add(report, "growth_restriction", s["growth"], INEQ_TOL, not noisy, noise_note)
    s["direction_rate"] = direction_rate_margin(log["q"], log["q_d"], log["omega"], log["omega_d"])
    _add(report, "direction_rate", s["direction_rate"], INEQ_TOL, True)
    s["eq_identity"] = INEQ_TOL - np.abs(dot(e_q, e_q) - psi * (2 - psi))
    _add(report, "eq_identity", s["eq_identity"], 0.0, True)

    s["C_omega_logged"] = C_omega_of(log["q"], log["omega_d"])
    est = sg.C_omega if C_omega_est is None else C_omega_est
    _add(report, "C_omega_bound", est - s["C_omega_logged"], 0.0, False,
         "post-hoc check of the C_omega estimate used for beta_q")
    return report


def certified_gains(log, gains, params, C_omega_est, Gamma=None, headroom=0.2):
    """Stability gains whose C_omega covers the logged supremum (with headroom)."""
    sup = float(np.max(C_omega_of(log["q"], log["omega_d"]))) if len(log["t"]) else 0.0
    return select_stability_gains(gains, params, max(C_omega_est, (1 + headroom) * sup), Gamma)


def exponential_envelope(V, t, alpha, factor=1.05):
    """Margin of ``V(t) <= factor V(0) exp(-alpha t)`` at every sample."""
    V = np.asarray(V, dtype=float)
    t = np.asarray(t, dtype=float)
    return factor * V[0] * np.exp(-alpha * (t - t[0])) - V
