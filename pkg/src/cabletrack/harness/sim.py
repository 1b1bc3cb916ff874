"""Closed-loop simulation: physics at the integrator step, control and
logging at the control period."""

import time
from dataclasses import dataclass, field

import numpy as np

from .. import lyapunov
from ..controller import BacksteppingController
from ..dynamics import SystemState, rk4_vector
from ..errors import BarrierViolation, CableDegenerate, DegenerateForce, InfeasibleInitial
from ..generator import CableLengthGenerator
from ..geometry import cross, dot, so3_error
from .disturbance import (
    NOISE_STREAM,
    WIND_STREAM,
    ActuatorLag,
    GaussianStream,
    impulse_force,
    measure,
    plant_params,
    wind_force,
)

# (name, width) in CSV order
SCHEMA = (
    ("t", 1),
    ("x_L", 3), ("v_L", 3), ("q", 3), ("omega", 3), ("L", 1), ("L_dot", 1), ("R", 9), ("Omega", 3),
    ("x_Q", 3),
    ("x_Ld", 3), ("v_Ld", 3), ("L_d", 1), ("L_d_dot", 1), ("L_d_ddot", 1),
    ("f", 1), ("tau", 3), ("f_L", 1),
    ("F_L", 3), ("q_d", 3), ("omega_d", 3), ("omega_d_dot", 3), ("F_c", 3),
    ("R_d", 9), ("Omega_d", 3), ("Omega_d_dot", 3), ("Delta_L", 3),
    ("e_x", 3), ("e_v", 3), ("e_L", 1), ("e_L_dot", 1), ("e_q", 3), ("e_omega", 3), ("psi_q", 1),
    ("e_R", 3), ("e_Omega", 3),
    ("barrier_L", 1), ("barrier_q", 1), ("V1", 1), ("V2", 1), ("V3", 1),
    ("gen_iterations", 1), ("gen_objective", 1), ("gen_violation", 1), ("gen_converged", 1),
)

ABORT_ERRORS = (BarrierViolation, CableDegenerate, DegenerateForce, InfeasibleInitial)


def column_names():
    out = []
    for name, w in SCHEMA:
        out.extend([name] if w == 1 else [f"{name}[{i}]" for i in range(w)])
    return out


def _slices():
    out, i = {}, 0
    for name, w in SCHEMA:
        out[name] = (i, w)
        i += w
    return out, i


SLICES, WIDTH = _slices()


@dataclass
class RunLog:
    """Per-control-step record. ``log["e_x"]`` returns an ``(n, 3)`` array."""

    data: np.ndarray
    meta: dict = field(default_factory=dict)
    aborted: dict = None
    solver_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __getitem__(self, name):
        i, w = SLICES[name]
        return self.data[:, i] if w == 1 else self.data[:, i:i + w]

    def __contains__(self, name):
        return name in SLICES

    def __len__(self):
        return self.data.shape[0]

    @property
    def t(self):
        return self["t"]

    def keys(self):
        return [name for name, _ in SCHEMA]


def true_errors(s, cmd, ref):
    """Tracking errors of the true state against the controller's commands."""
    e_x = s.x_L - ref.x_Ld[0]
    e_v = s.v_L - ref.x_Ld[1]
    e_q = cross(cmd.q_d, s.q)
    psi = 1.0 - float(dot(s.q, cmd.q_d))
    e_w = s.omega + float(dot(s.q, cmd.omega_d)) * s.q - cmd.omega_d
    e_R, e_Omega = so3_error(cmd.R_d, s.R, cmd.Omega_d, s.Omega)
    return e_x, e_v, s.L - ref.L_d[0], s.L_dot - ref.L_d[1], e_q, e_w, psi, e_R, e_Omega


def stability_gains(cfg):
    ref = cfg.ref
    C_w = lyapunov.reference_C_omega(ref, cfg.duration, cfg.params)
    Gamma = lyapunov.reference_gamma(ref, cfg.duration, cfg.params.m_L, cfg.params.g)
    return lyapunov.select_stability_gains(cfg.gains, cfg.params, C_w, Gamma)


def run(cfg, duration=None):
    """Simulate a scenario. Aborts on barrier violation or a degenerate cable,
    recording the offending step in ``RunLog.aborted``."""
    duration = cfg.duration if duration is None else float(duration)
    steps = int(round(duration / cfg.T_s))
    sub = cfg.substeps
    dist = cfg.disturbance
    reduced = cfg.mode == "reduced"
    p_ctrl = cfg.params
    p_plant = plant_params(cfg.params, dist)
    gains = cfg.gains
    sg = stability_gains(cfg)

    ctrl = BacksteppingController(gains, p_ctrl, T_s=cfg.T_s, coupling=cfg.coupling)
    s0 = cfg.initial_state()
    gen = None
    if cfg.generator is not None:
        gen = CableLengthGenerator(cfg.generator, gains, p_ctrl, cfg.ref, s0.L, cfg.T_s, cfg.coupling)
    noise_rng = GaussianStream(cfg.seed, NOISE_STREAM)
    wind_rng = GaussianStream(cfg.seed, WIND_STREAM)
    lag = ActuatorLag(dist, cfg.dt)

    y = s0.to_vector()
    rows = np.full((steps + 1, WIDTH), np.nan)
    solver_times = []
    aborted = None
    n = 0
    for k in range(steps + 1):
        t = k * cfg.T_s
        try:
            s = SystemState.from_vector(y)
            s_meas = measure(s, dist, noise_rng)
            sol = None
            if gen is not None:
                t0 = time.perf_counter()
                chain, sol = gen.step(s_meas, t)
                solver_times.append(time.perf_counter() - t0)
                ref = cfg.ref.sample(t, chain)
            else:
                ref = cfg.ref.sample(t)
            u, cmd = ctrl.step(s_meas, ref, reduced=reduced)
            errs = true_errors(s, cmd, ref)
            e_x, e_v, e_L, e_Ld, e_q, e_w, psi, e_R, e_Om = errs
            bL = gains.iota**2 - e_L**2
            bq = gains.rho**2 - psi
            if bL <= 0 or bq <= 0:
                layer = "cable_length" if bL <= 0 else "cable_direction"
                raise BarrierViolation(f"{layer} barrier violated by the true state", layer=layer,
                                       margin=min(bL, bq))
            row = rows[k]
            _put(row, "t", t)
            _put(row, "x_L", s.x_L)
            _put(row, "v_L", s.v_L)
            _put(row, "q", s.q)
            _put(row, "omega", s.omega)
            _put(row, "L", s.L)
            _put(row, "L_dot", s.L_dot)
            _put(row, "R", s.R.reshape(9))
            _put(row, "Omega", s.Omega)
            _put(row, "x_Q", s.x_L - s.L * s.q)
            _put(row, "x_Ld", ref.x_Ld[0])
            _put(row, "v_Ld", ref.x_Ld[1])
            _put(row, "L_d", ref.L_d[0])
            _put(row, "L_d_dot", ref.L_d[1])
            _put(row, "L_d_ddot", ref.L_d[2])
            _put(row, "f", u.f)
            _put(row, "tau", u.tau)
            _put(row, "f_L", u.f_L)
            for name in ("F_L", "q_d", "omega_d", "omega_d_dot", "F_c", "Omega_d", "Omega_d_dot"):
                _put(row, name, getattr(cmd, name))
            _put(row, "R_d", cmd.R_d.reshape(9))
            _put(row, "Delta_L", u.f_L * s.q - cmd.F_L)
            _put(row, "e_x", e_x)
            _put(row, "e_v", e_v)
            _put(row, "e_L", e_L)
            _put(row, "e_L_dot", e_Ld)
            _put(row, "e_q", e_q)
            _put(row, "e_omega", e_w)
            _put(row, "psi_q", psi)
            _put(row, "e_R", e_R)
            _put(row, "e_Omega", e_Om)
            _put(row, "barrier_L", bL)
            _put(row, "barrier_q", bq)
            _put(row, "V1", lyapunov.V1(e_x, e_v, gains, p_ctrl.m_L))
            _put(row, "V2", lyapunov.V2(e_L, e_Ld, sg, gains, p_ctrl.m_Q))
            _put(row, "V3", lyapunov.V3(e_q, e_w, psi, sg, gains))
            if sol is not None:
                _put(row, "gen_iterations", sol.iterations)
                _put(row, "gen_objective", sol.objective)
                _put(row, "gen_violation", sol.max_violation)
                _put(row, "gen_converged", float(sol.converged))
            n = k + 1
            if k == steps:
                break

            if reduced:
                y[14:23] = cmd.R_d.reshape(9)
                y[23:26] = cmd.Omega_d
            F_wind = wind_force(dist, wind_rng, p_plant.m_L)
            u_cmd = np.concatenate([[u.f], u.tau, [u.f_L]])
            for j in range(sub):
                ua = lag(u_cmd)
                t_j = t + j * cfg.dt
                if dist is not None and dist.has("impulse"):
                    F_ext = lambda tau, t_j=t_j: F_wind + impulse_force(dist, t_j + tau)  # noqa: E731
                else:
                    F_ext = F_wind
                y = rk4_vector(y, cfg.dt, ua[0], ua[1:4], ua[4], p_plant, F_ext=F_ext, freeze_attitude=reduced)
        except ABORT_ERRORS as exc:
            aborted = {
                "step": k,
                "time": t,
                "error": type(exc).__name__,
                "layer": getattr(exc, "layer", None),
                "message": str(exc),
            }
            break

    meta = {
        "scenario": cfg.to_dict(),
        "stability_gains": sg.to_dict(),
        "notes": [x for x in [cfg.initial.derivation()] if x],
    }
    return RunLog(data=rows[:n].copy(), meta=meta, aborted=aborted, solver_times=np.asarray(solver_times))


def _put(row, name, value):
    i, w = SLICES[name]
    if w == 1:
        row[i] = float(value)
    else:
        row[i:i + w] = value
