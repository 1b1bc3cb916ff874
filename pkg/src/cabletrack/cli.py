"""Command-line entry point: run, certify, metrics and sweep.

Exit codes: 0 success, 2 assertion or certification failure, 1 bad
configuration or input.
"""

import argparse
import json
import os
import sys

from .errors import CableTrackError, ConfigError
from .harness import io
from .harness.metrics import metrics
from .harness.runner import SWEEPS, certify_log, run_to_dir, sweep_configs
from .harness.scenario import bundled_scenarios, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


def _print_failures(report, stream):
    for c in report.failures():
        print(f"FAIL {c.name}: worst margin {c.worst:.6g} at step {c.index} (t = {c.time:.2f} s)"
              + (f" [{c.note}]" if c.note else ""), file=stream)


def cmd_run(args):
    cfg = load_scenario(args.scenario)
    over = {}
    if args.mode:
        over["mode"] = args.mode
    if args.duration:
        over["duration"] = args.duration
    if args.seed is not None:
        over["seed"] = args.seed
    if over:
        cfg = cfg.with_overrides(**over)
    log, report, summary = run_to_dir(cfg, args.out)
    print(f"{cfg.name}: {len(log)} steps written to {os.path.join(args.out, 'runlog.csv')}")
    if log.aborted is not None:
        a = log.aborted
        print(f"aborted at step {a['step']} (t = {a['time']:.2f} s): {a['error']}: {a['message']}", file=sys.stderr)
        return EXIT_FAIL
    if not report.passed:
        _print_failures(report, sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _read(path):
    try:
        return io.read_runlog(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read run log {path}: {exc}") from None


def cmd_certify(args):
    log = _read(args.runlog)
    report = certify_log(log)
    if args.json:
        report.to_json(args.json)
    for c in report.checks:
        tag = ("PASS" if c.passed else "FAIL") if c.asserted else "info"
        print(f"{tag:4s} {c.name}: worst margin {c.worst:.6g} at t = {c.time:.2f} s")
    if not report.passed:
        _print_failures(report, sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_metrics(args):
    log = _read(args.runlog)
    if len(log) == 0:
        raise ConfigError("run log is empty")
    m = metrics(log, window=args.window)
    print(json.dumps(m.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args):
    status = EXIT_OK
    for cfg in sweep_configs(args.which, args.duration):
        log, report, summary = run_to_dir(cfg, args.out, stem=cfg.name)
        ok = log.aborted is None and report.passed
        print(f"{cfg.name}: {'ok' if ok else 'FAILED'}")
        if not ok:
            status = EXIT_FAIL
    return status


def build_parser():
    ap = argparse.ArgumentParser(prog="cabletrack", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write runlog.csv + summary.json")
    p.add_argument("scenario", help="scenario JSON file or bundled name (" + ", ".join(
        n[:-5] for n in bundled_scenarios()) + ")")
    p.add_argument("--out", default=".")
    p.add_argument("--mode", choices=("full", "reduced"))
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="check the stability monitors along a run log")
    p.add_argument("runlog")
    p.add_argument("--json", help="also write the report summary here")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("metrics", help="RMSE, mean and convergence times of a run log")
    p.add_argument("runlog")
    p.add_argument("--window", type=float, default=20.0)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="run the weighting sweeps")
    p.add_argument("which", choices=sorted(SWEEPS))
    p.add_argument("--out", default=".")
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors count as configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, CableTrackError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
