"""Scenario configuration and JSON loading."""

import json
from dataclasses import dataclass, field, fields
from importlib import resources

import numpy as np

from ..controller import Gains
from ..dynamics import PhysicalParams, SystemState
from ..errors import CableTrackError, ConfigError
from ..generator import GeneratorConfig
from ..geometry import E3, axis_angle, tangent_project
from .disturbance import DisturbanceSpec
from .references import build_reference

MODES = ("full", "reduced")
SECTIONS = {"name", "description", "params", "gains", "generator", "initial", "reference", "disturbance", "run"}


def _params_from(d):
    d = dict(d or {})
    if "J" in d:
        d["J"] = np.asarray(d["J"], dtype=float)
    return PhysicalParams(**d)


def _params_to(p):
    J = p.J
    J = np.diag(J).tolist() if np.allclose(J, np.diag(np.diag(J))) else J.tolist()
    return {"m_Q": p.m_Q, "m_L": p.m_L, "g": p.g, "J": J, "L_min": p.L_min}


def _gains_from(d):
    d = dict(d or {})
    for k in ("K_p", "K_d"):
        if k in d:
            d[k] = np.asarray(d[k], dtype=float)
    return Gains(**d)


@dataclass
class InitialCondition:
    """Initial plant state. Either the payload position ``x_L`` or the
    multirotor position ``x_Q`` is given; in the latter case
    ``x_L = x_Q + L q``."""

    x_L: tuple = None
    x_Q: tuple = None
    v_L: tuple = (0.0, 0.0, 0.0)
    q: tuple = None
    q_tilt: tuple = None
    omega: tuple = (0.0, 0.0, 0.0)
    L: float = 1.0
    L_dot: float = 0.0
    R: tuple = None
    Omega: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown initial-state fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def direction(self):
        if self.q is not None:
            return np.asarray(self.q, dtype=float)
        q = -E3
        if self.q_tilt is not None:
            # rotation vector applied to the hanging direction
            q = axis_angle(np.asarray(self.q_tilt, dtype=float)) @ q
        return q

    def state(self):
        if (self.x_L is None) == (self.x_Q is None):
            raise ConfigError("initial state needs exactly one of x_L and x_Q")
        q = self.direction()
        q = q / np.linalg.norm(q)
        if self.x_L is not None:
            x_L = np.asarray(self.x_L, dtype=float)
        else:
            x_L = np.asarray(self.x_Q, dtype=float) + float(self.L) * q
        R = np.eye(3) if self.R is None else np.asarray(self.R, dtype=float).reshape(3, 3)
        try:
            return SystemState(
                x_L=x_L, v_L=self.v_L, q=q, omega=tangent_project(q, np.asarray(self.omega, dtype=float)),
                L=self.L, L_dot=self.L_dot, R=R, Omega=self.Omega,
            )
        except CableTrackError as exc:
            raise ConfigError(f"invalid initial state: {exc}") from None

    def derivation(self):
        if self.x_Q is None:
            return None
        return "payload position derived from the multirotor position as x_L = x_Q + L q"


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    params: PhysicalParams = field(default_factory=PhysicalParams)
    gains: Gains = field(default_factory=Gains)
    generator: GeneratorConfig = None
    initial: InitialCondition = field(default_factory=lambda: InitialCondition(x_L=(0.0, 0.0, 0.0)))
    reference: dict = field(default_factory=lambda: {"selector": "constant", "position": [0, 0, 0], "L_d": 1.0})
    duration: float = 10.0
    seed: int = 0
    disturbance: DisturbanceSpec = None
    mode: str = "full"
    coupling: str = "measured"
    T_s: float = 0.01
    dt: float = 0.001
    description: str = ""

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.coupling not in ("measured", "nominal"):
            raise ConfigError("coupling must be 'measured' or 'nominal'")
        ratio = self.T_s / self.dt
        if not (self.dt > 0 and abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1):
            raise ConfigError("control period must be a whole multiple of the physics step")
        self.ref = build_reference(self.reference)
        s0 = self.initial.state()
        if self.generator is None and self.ref.L_terms is None:
            raise ConfigError("either a generator or a desired-length reference is required")
        if self.ref.L_terms is not None and self.generator is None:
            e_L = s0.L - self.ref.length(0.0)[0]
            if e_L * e_L >= self.gains.iota**2:
                raise ConfigError("initial cable-length error violates its barrier")
        q_d = self._initial_q_d(s0)
        if 1.0 - float(q_d @ s0.q) >= self.gains.rho**2:
            raise ConfigError("initial cable-direction error violates its barrier")

    def _initial_q_d(self, s0):
        X = self.ref.payload(0.0)
        g = self.gains
        e_x, e_v = s0.x_L - X[0], s0.v_L - X[1]
        F = -g.K_p * np.tanh(e_x) - g.K_d * np.tanh(e_v) + self.params.m_L * (X[2] + self.params.g * E3)
        return -F / np.linalg.norm(F)

    @property
    def steps(self):
        return int(round(self.duration / self.T_s))

    @property
    def substeps(self):
        return int(round(self.T_s / self.dt))

    def initial_state(self):
        return self.initial.state()

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - SECTIONS
        if unknown:
            raise ConfigError(f"unknown scenario sections: {sorted(unknown)}")
        run = dict(d.get("run") or {})
        allowed = {"duration", "seed", "mode", "coupling", "T_s", "dt"}
        if set(run) - allowed:
            raise ConfigError(f"unknown run settings: {sorted(set(run) - allowed)}")
        try:
            gen = d.get("generator")
            dist = d.get("disturbance")
            return cls(
                name=d.get("name", "scenario"),
                description=d.get("description", ""),
                params=_params_from(d.get("params")),
                gains=_gains_from(d.get("gains")),
                generator=None if gen is None else GeneratorConfig.from_dict(gen),
                initial=InitialCondition.from_dict(d.get("initial") or {}),
                reference=dict(d.get("reference") or {}),
                disturbance=None if dist is None else DisturbanceSpec.from_dict(dist),
                **run,
            )
        except ConfigError:
            raise
        except (CableTrackError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        gains = self.gains.to_dict()
        return {
            "name": self.name,
            "description": self.description,
            "params": _params_to(self.params),
            "gains": {k: (np.asarray(v).tolist() if np.ndim(v) else v) for k, v in gains.items()},
            "generator": None if self.generator is None else _jsonable(self.generator.to_dict()),
            "initial": _jsonable(self.initial.to_dict()),
            "reference": _jsonable(self.reference),
            "disturbance": None if self.disturbance is None else self.disturbance.to_dict(),
            "run": {
                "duration": self.duration, "seed": self.seed, "mode": self.mode,
                "coupling": self.coupling, "T_s": self.T_s, "dt": self.dt,
            },
        }

    def with_overrides(self, **kw):
        d = self.to_dict()
        for k, v in kw.items():
            if k in ("duration", "seed", "mode", "coupling", "T_s", "dt"):
                d["run"][k] = v
            else:
                d[k] = v
        return ScenarioConfig.from_dict(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_scenario(path_or_name):
    """Load a scenario from a JSON file, or by name from the bundled set."""
    text = None
    name = str(path_or_name)
    if name.endswith(".json"):
        try:
            with open(name) as fh:
                text = fh.read()
        except FileNotFoundError:
            base = name.rsplit("/", 1)[-1]
            if base in bundled_scenarios():
                text = _bundled_text(base)
            else:
                raise ConfigError(f"scenario file not found: {name}") from None
    elif name + ".json" in bundled_scenarios():
        text = _bundled_text(name + ".json")
    else:
        raise ConfigError(f"unknown scenario {name!r}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed scenario JSON: {exc}") from None
    return ScenarioConfig.from_dict(data)


def _bundled_text(fname):
    return resources.files("cabletrack").joinpath("scenarios", fname).read_text()


def bundled_scenarios():
    root = resources.files("cabletrack").joinpath("scenarios")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))
