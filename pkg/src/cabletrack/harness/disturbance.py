"""Measurement noise, parameter mismatch, actuator lag, wind and impulses.

Random numbers come from numpy's Philox counter-based generator keyed by
(seed, stream). Gaussian samples use the Box-Muller transform on 53-bit
uniforms, so the sequence depends only on the seed.
"""

from dataclasses import dataclass, fields

import numpy as np

from ..dynamics import SystemState
from ..errors import ConfigError
from ..geometry import axis_angle, tangent_project

CASES = ("noise", "mismatch", "lag", "wind", "impulse")
NOISE_STREAM, WIND_STREAM = 1, 2


class GaussianStream:
    """Standard normal samples from Philox via Box-Muller."""

    def __init__(self, seed, stream):
        key = np.array([int(seed) % 2**64, stream], dtype=np.uint64)
        self._bits = np.random.Philox(key=key)

    def uniform(self, n):
        raw = self._bits.random_raw(n)
        # 53-bit mantissa, shifted into the open interval (0, 1)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, n):
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        r = np.sqrt(-2.0 * np.log(u[:m]))
        th = 2.0 * np.pi * u[m:]
        return np.concatenate([r * np.cos(th), r * np.sin(th)])[:n]


@dataclass(frozen=True)
class DisturbanceSpec:
    noise_x_L: float = 0.02
    noise_v_L: float = 0.02
    noise_L: float = 0.02
    noise_L_dot: float = 0.02
    noise_Omega: float = 0.01
    noise_q_angle: float = 0.01
    scale_m_Q: float = 1.03
    scale_m_L: float = 0.95
    scale_J: tuple = (1.10, 0.95, 1.05)
    actuator_tau: float = 0.05
    wind_std: tuple = (0.6, 0.6, 0.6)
    impulse_time: float = 8.0
    impulse_duration: float = 0.25
    impulse_amplitude: tuple = (5.0, 1.0, -2.0)
    cases: tuple = CASES

    def __post_init__(self):
        object.__setattr__(self, "scale_J", tuple(float(v) for v in self.scale_J))
        object.__setattr__(self, "wind_std", tuple(float(v) for v in self.wind_std))
        object.__setattr__(self, "impulse_amplitude", tuple(float(v) for v in self.impulse_amplitude))
        object.__setattr__(self, "cases", tuple(self.cases))
        stds = [self.noise_x_L, self.noise_v_L, self.noise_L, self.noise_L_dot, self.noise_Omega,
                self.noise_q_angle, *self.wind_std]
        if min(stds) < 0:
            raise ConfigError("standard deviations must be non-negative")
        if set(self.cases) - set(CASES):
            raise ConfigError(f"unknown disturbance cases: {sorted(set(self.cases) - set(CASES))}")
        if self.actuator_tau < 0 or self.impulse_duration <= 0:
            raise ConfigError("lag time constant must be >= 0 and impulse duration > 0")
        if self.scale_m_Q <= 0 or self.scale_m_L <= 0 or min(self.scale_J) <= 0:
            raise ConfigError("parameter scalings must be positive")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        if set(d) - names:
            raise ConfigError(f"unknown disturbance fields: {sorted(set(d) - names)}")
        return cls(**d)

    def to_dict(self):
        return {f.name: (list(v) if isinstance(v, tuple) else v) for f in fields(self) for v in [getattr(self, f.name)]}

    def has(self, case):
        return case in self.cases


def perturb_direction(q, rotvec):
    """Rotate ``q`` by a small axis-angle vector; the result stays on the sphere."""
    q2 = axis_angle(rotvec) @ q
    return q2 / np.linalg.norm(q2)


def measure(s, spec, rng):
    """Noisy copy of the true state for the controller; the plant state is untouched."""
    if spec is None or not spec.has("noise"):
        return s
    z = rng.normal(14)
    if spec.noise_q_angle > 0:
        q = perturb_direction(s.q, spec.noise_q_angle * z[11:14])
        omega = tangent_project(q, s.omega)
    else:
        q, omega = s.q, s.omega
    return SystemState(
        x_L=s.x_L + spec.noise_x_L * z[0:3],
        v_L=s.v_L + spec.noise_v_L * z[3:6],
        q=q,
        omega=omega,
        L=s.L + spec.noise_L * z[6],
        L_dot=s.L_dot + spec.noise_L_dot * z[7],
        R=s.R,
        Omega=s.Omega + spec.noise_Omega * z[8:11],
    )


def plant_params(params, spec):
    if spec is None or not spec.has("mismatch"):
        return params
    return params.scaled(m_Q=spec.scale_m_Q, m_L=spec.scale_m_L, J=spec.scale_J)


def wind_force(spec, rng, m_L):
    """Payload force from a zero-order-held wind acceleration sample."""
    if spec is None or not spec.has("wind"):
        return np.zeros(3)
    return m_L * np.asarray(spec.wind_std) * rng.normal(3)


def impulse_force(spec, t):
    """Half-sine world-frame force on the payload."""
    if spec is None or not spec.has("impulse"):
        return np.zeros(3)
    s = (t - spec.impulse_time) / spec.impulse_duration
    if s < 0.0 or s > 1.0:
        return np.zeros(3)
    return np.sin(np.pi * s) * np.asarray(spec.impulse_amplitude)


class ActuatorLag:
    """First-order lag on (f, tau, f_L), discretized exactly for a held command."""

    def __init__(self, spec, dt):
        on = spec is not None and spec.has("lag") and spec.actuator_tau > 0
        self.a = 1.0 - np.exp(-dt / spec.actuator_tau) if on else 1.0
        self.u = None

    def __call__(self, u_cmd):
        u_cmd = np.asarray(u_cmd, dtype=float)
        if self.u is None or self.a == 1.0:
            self.u = u_cmd.copy()
        else:
            self.u = self.u + self.a * (u_cmd - self.u)
        return self.u


def inject(kind, value, spec, rng=None):
    """Apply one disturbance channel.

    ``kind`` is ``"measurement"`` (value: SystemState), ``"params"``
    (value: PhysicalParams), ``"wind"`` (value: payload mass) or
    ``"impulse"`` (value: time).
    """
    if kind == "measurement":
        return measure(value, spec, rng)
    if kind == "params":
        return plant_params(value, spec)
    if kind == "wind":
        return wind_force(spec, rng, value)
    if kind == "impulse":
        return impulse_force(spec, value)
    raise ConfigError(f"unknown disturbance channel {kind!r}")
