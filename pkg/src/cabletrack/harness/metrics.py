"""Tracking metrics: RMSE and mean over a window, and convergence time."""

from dataclasses import dataclass, field

import numpy as np

# error-norm tolerances used for convergence times
TOLERANCES = {"e_x": 0.05, "e_L": 0.01, "e_q": 0.02, "e_R": 0.02}
HOLD = 10.0


def error_norms(log):
    e_L = np.asarray(log["e_L"], dtype=float)
    return {
        "e_x": np.linalg.norm(log["e_x"], axis=1),
        "e_q": np.linalg.norm(log["e_q"], axis=1),
        "e_L": np.abs(e_L),
        "e_R": np.linalg.norm(log["e_R"], axis=1),
    }


def convergence_time(t, x, tol, hold=HOLD):
    """First time after which ``x <= tol`` holds for ``hold`` seconds, else None.

    A hold period that runs past the end of the log does not count.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(t) < 2:
        return None
    dt = (t[-1] - t[0]) / (len(t) - 1)
    need = int(round(hold / dt))
    ok = x <= tol
    # run[i]: number of consecutive in-tolerance samples starting at i
    run = np.zeros(len(x) + 1, dtype=int)
    for i in range(len(x) - 1, -1, -1):
        run[i] = run[i + 1] + 1 if ok[i] else 0
    hits = np.nonzero(run[:-1] >= need)[0]
    return None if hits.size == 0 else float(t[hits[0]] - t[0])


@dataclass
class MetricsReport:
    window: float
    tolerances: dict
    signals: dict = field(default_factory=dict)
    solver_timing: dict = None

    def rmse(self, name):
        return self.signals[name]["rmse"]

    def mean(self, name):
        return self.signals[name]["mean"]

    def t_conv(self, name):
        return self.signals[name]["t_conv"]

    def to_dict(self):
        return {
            "window": self.window,
            "tolerances": dict(self.tolerances),
            "signals": self.signals,
            "solver_timing": self.solver_timing,
        }


def timing_stats(samples):
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        return None
    return {
        "count": int(samples.size),
        "mean_s": float(samples.mean()),
        "max_s": float(samples.max()),
        "std_s": float(samples.std()),
    }


def metrics(log, tolerances=None, window=20.0, hold=HOLD, solver_times=None):
    tol = dict(TOLERANCES)
    tol.update(tolerances or {})
    t = np.asarray(log["t"], dtype=float)
    if len(t) == 0:
        raise ValueError("empty log")
    in_window = t < t[0] + window - 1e-9
    if not in_window.any():
        in_window[:] = True
    report = MetricsReport(window=window, tolerances=tol)
    for name, x in error_norms(log).items():
        w = x[in_window]
        report.signals[name] = {
            "rmse": float(np.sqrt(np.mean(w * w))),
            "mean": float(np.mean(w)),
            "t_conv": convergence_time(t, x, tol[name], hold),
        }
    if solver_times is None:
        solver_times = getattr(log, "solver_times", None)
    if solver_times is not None:
        report.solver_timing = timing_stats(solver_times)
    return report
