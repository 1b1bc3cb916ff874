"""Scenario runs shared between test modules, and the acceptance verdict registry."""

import time
from functools import lru_cache

from cabletrack.harness import load_scenario, run
from cabletrack.harness.runner import certify_log

# criterion number -> {"title": str, "parts": [(ok, detail), ...]}
VERDICTS = {}


@lru_cache(maxsize=None)
def scenario_run(name, duration=None, **overrides):
    """``(cfg, log, wall_seconds)`` for a bundled scenario, simulated once per session."""
    cfg = load_scenario(name)
    if duration is not None or overrides:
        cfg = cfg.with_overrides(**({"duration": duration} if duration else {}), **overrides)
    t0 = time.perf_counter()
    log = run(cfg)
    return cfg, log, time.perf_counter() - t0


@lru_cache(maxsize=None)
def certified(name, duration=None):
    cfg, log, _ = scenario_run(name, duration)
    return certify_log(log, cfg)


def record(criterion, title, ok, detail):
    entry = VERDICTS.setdefault(criterion, {"title": title, "parts": []})
    entry["parts"].append((bool(ok), detail))
    print(f"criterion {criterion} ({title}): {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def summary_lines():
    out = []
    for n in sorted(VERDICTS):
        v = VERDICTS[n]
        ok = all(p for p, _ in v["parts"])
        details = "; ".join(d for p, d in v["parts"] if not p) if not ok else "; ".join(d for _, d in v["parts"])
        out.append(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {v['title']}: {details}")
    return out
