"""High-level run / certify / sweep helpers shared by the CLI and tests."""

import os
import time

import numpy as np

from .. import lyapunov
from .io import write_json, write_runlog
from .metrics import metrics
from .scenario import ScenarioConfig, load_scenario
from .sim import run

SWEEPS = {
    "sim1": [("sim1_test1", {}), ("sim1_test2", {}), ("sim1_test3", {})],
    "sim2": [
        (base, {"k9": k9})
        for base in ("sim2_test1", "sim2_test2")
        for k9 in (100.0, 10.0, 0.1, 0.0)
    ],
}


def _log_config(log):
    return ScenarioConfig.from_dict(log.meta["scenario"])


def certify_log(log, cfg=None):
    """Run every stability monitor over a log.

    The C_omega used for beta_q is the scenario estimate, enlarged when the
    logged supremum exceeds it.
    """
    cfg = cfg or _log_config(log)
    gains, params = cfg.gains, cfg.params
    sg0 = log.meta.get("stability_gains") or {}
    C_w = sg0.get("C_omega", 0.0)
    Gamma = sg0.get("Gamma")
    sg = lyapunov.certified_gains(log, gains, params, C_w, Gamma)
    report = lyapunov.certify_trajectory(
        log, sg, gains, params, mode=cfg.mode, disturbed=cfg.disturbance is not None,
        noisy=cfg.disturbance is not None and cfg.disturbance.has("noise"), C_omega_est=C_w,
    )
    if log.aborted is not None:
        report.checks.append(lyapunov.CheckResult(
            "run_completed", True, False, -np.inf, log.aborted["step"], log.aborted["time"],
            log.aborted["message"],
        ))
    elif len(report.t) == 0:
        report.checks.append(lyapunov.CheckResult("run_completed", True, False, -np.inf, -1, np.nan, "empty log"))
    return report


def summarize(cfg, log, report, wall_time=None, window=20.0):
    m = metrics(log, window=window) if len(log) else None
    return {
        "scenario": cfg.name,
        "mode": cfg.mode,
        "completed": log.aborted is None,
        "aborted": log.aborted,
        "metrics": None if m is None else m.to_dict(),
        "certification": report.summary(),
        "wall_time_s": wall_time,
    }


def run_to_dir(cfg, out_dir, stem="runlog"):
    """Run, certify and write ``<stem>.csv`` and a summary JSON into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    log = run(cfg)
    wall = time.perf_counter() - t0
    report = certify_log(log, cfg)
    csv_path = os.path.join(out_dir, stem + ".csv")
    write_runlog(log, csv_path)
    summary = summarize(cfg, log, report, wall)
    name = "summary.json" if stem == "runlog" else stem + "_summary.json"
    write_json(summary, os.path.join(out_dir, name))
    return log, report, summary


def sweep_configs(which, duration=None):
    if which not in SWEEPS:
        raise KeyError(which)
    out = []
    for base, gen_over in SWEEPS[which]:
        cfg = load_scenario(base)
        d = cfg.to_dict()
        d["generator"].update(gen_over)
        if gen_over:
            d["name"] = base + "_" + "_".join(f"{k}_{v:g}" for k, v in gen_over.items())
        if duration is not None:
            d["run"]["duration"] = duration
        out.append(ScenarioConfig.from_dict(d))
    return out
