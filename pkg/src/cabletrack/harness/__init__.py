"""Scenarios, references, disturbances, simulation loop, metrics and I/O."""

from .disturbance import DisturbanceSpec, GaussianStream, inject
from .io import read_runlog, write_json, write_runlog
from .metrics import MetricsReport, convergence_time, metrics
from .references import Reference, build_reference, reference
from .runner import certify_log, run_to_dir, summarize, sweep_configs
from .scenario import InitialCondition, ScenarioConfig, bundled_scenarios, load_scenario
from .sim import RunLog, column_names, run

__all__ = [
    "DisturbanceSpec", "GaussianStream", "inject", "read_runlog", "write_json", "write_runlog",
    "MetricsReport", "convergence_time", "metrics", "Reference", "build_reference", "reference",
    "certify_log", "run_to_dir", "summarize", "sweep_configs", "InitialCondition", "ScenarioConfig",
    "bundled_scenarios", "load_scenario", "RunLog", "column_names", "run",
]
