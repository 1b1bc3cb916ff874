"""Analytic reference trajectories with exact derivatives.

A reference component is a sum of terms; every term knows its derivatives
in closed form, so no numerical differentiation is involved.
"""

import math

import numpy as np
from numpy.polynomial import polynomial as P

from ..controller import ReferenceSample
from ..errors import ConfigError

ORDERS = 6  # derivative orders 0..5


class Term:
    """Base class; ``derivatives(t)`` returns orders 0..5 along the first axis.

    ``t`` may be a scalar or an array of times.
    """

    def derivatives(self, t):
        raise NotImplementedError


def _k(t):
    return np.arange(ORDERS).reshape((ORDERS,) + (1,) * np.ndim(t))


class Const(Term):
    def __init__(self, c):
        self.c = float(c)

    def derivatives(self, t):
        d = np.zeros((ORDERS,) + np.shape(t))
        d[0] = self.c
        return d


class Sin(Term):
    """A sin(w t + phi)."""

    def __init__(self, A, w, phi=0.0):
        self.A, self.w, self.phi = float(A), float(w), float(phi)

    def derivatives(self, t):
        k = _k(t)
        return self.A * self.w**k * np.sin(self.w * np.asarray(t) + self.phi + k * math.pi / 2)


class Exp(Term):
    """A exp(r t)."""

    def __init__(self, A, r):
        self.A, self.r = float(A), float(r)

    def derivatives(self, t):
        return self.A * self.r ** _k(t) * np.exp(self.r * np.asarray(t))


class Gauss(Term):
    """A exp(-a t^2); k-th derivative is p_k(t) exp(-a t^2) with p_{k+1} = p_k' - 2 a t p_k."""

    def __init__(self, A, a):
        self.A, self.a = float(A), float(a)
        polys = [np.array([1.0])]
        for _ in range(ORDERS - 1):
            p = polys[-1]
            polys.append(P.polysub(P.polyder(p), P.polymulx(2.0 * self.a * p)))
        self.polys = polys

    def derivatives(self, t):
        t = np.asarray(t, dtype=float)
        e = np.exp(-self.a * t * t)
        return np.array([self.A * P.polyval(t, p) * e for p in self.polys])


_TERMS = {"const": Const, "sin": Sin, "cos": None, "exp": Exp, "gauss": Gauss}


def make_term(spec):
    """Build a term from ``{"type": ..., params}``; ``cos`` is a phase-shifted sin."""
    if isinstance(spec, (int, float)):
        return Const(spec)
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind not in _TERMS:
        raise ConfigError(f"unknown reference term type {kind!r}")
    try:
        if kind == "cos":
            return Sin(spec["A"], spec["w"], spec.get("phi", 0.0) + math.pi / 2)
        return _TERMS[kind](**spec)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind} term: {exc}") from None


class Reference:
    """Payload reference (three components) and an optional L_d component."""

    def __init__(self, x_terms, L_terms=None):
        if len(x_terms) != 3:
            raise ConfigError("payload reference needs three components")
        self.x_terms = [[make_term(s) for s in comp] for comp in x_terms]
        self.L_terms = None if L_terms is None else [make_term(s) for s in L_terms]

    def payload(self, t):
        """Payload-reference derivatives: shape (6, 3), or (len(t), 6, 3) for an array ``t``."""
        out = np.zeros((ORDERS, 3) + np.shape(t))
        for i, comp in enumerate(self.x_terms):
            for term in comp:
                out[:, i] += term.derivatives(t)
        return np.moveaxis(out, (0, 1), (-2, -1)) if np.ndim(t) else out

    def length(self, t):
        if self.L_terms is None:
            return None
        return sum(term.derivatives(t) for term in self.L_terms)

    def sample(self, t, L_chain=None):
        """ReferenceSample at ``t``; ``L_chain`` overrides the built-in length reference."""
        if t < 0:
            raise ConfigError("reference time must be non-negative")
        L = self.length(t) if L_chain is None else np.asarray(L_chain, dtype=float)
        if L is None:
            raise ConfigError("no desired cable length available")
        if L[0] <= 0:
            raise ConfigError("desired cable length must be positive")
        return ReferenceSample(self.payload(t), L, t)


def _sin(A, w, phi=0.0):
    return {"type": "sin", "A": A, "w": w, "phi": phi}


def _cos(A, w, phi=0.0):
    return {"type": "cos", "A": A, "w": w, "phi": phi}


PRESETS = {
    "sim1": lambda p: (
        [[_sin(2.0, 0.5)], [_cos(2.0, 0.5)], [{"type": "gauss", "A": 30.0, "a": 0.005}]],
        None,
    ),
    "sim2": lambda p: (
        [
            [{"type": "exp", "A": 1.0, "r": 0.1}],
            [_cos(1.0, 0.5), _sin(1.0, 0.3, math.pi / 2)],
            [_sin(2.0, 0.5, math.pi / 4), _cos(3.0, 1.0, math.pi / 2), 5.0],
        ],
        None,
    ),
    "figure8": lambda p: (
        [[_sin(1.5, 0.7)], [_sin(0.75, 1.4)], [2.0]],
        [1.85, _sin(0.3, 0.25)],
    ),
    "constant": lambda p: (
        [[float(c)] for c in p.get("position", (0.0, 0.0, 0.0))],
        None if p.get("L_d") is None else [float(p["L_d"])],
    ),
}
PRESETS["sim3"] = PRESETS["figure8"]
PRESETS["sim4"] = PRESETS["figure8"]


def build_reference(cfg):
    """Reference from a config dict: ``{"selector": name, ...}`` or ``{"x": ..., "L_d": ...}``."""
    cfg = dict(cfg or {})
    if "x" in cfg:
        return Reference(cfg["x"], cfg.get("L_d"))
    selector = cfg.get("selector")
    if selector not in PRESETS:
        raise ConfigError(f"unknown reference selector {selector!r}")
    return Reference(*PRESETS[selector](cfg))


def reference(selector, t, **kwargs):
    """Payload reference derivatives (orders 0..5) and the optional L_d chain at ``t``."""
    ref = build_reference({"selector": selector, **kwargs})
    if t < 0:
        raise ConfigError("reference time must be non-negative")
    return ref.payload(t), ref.length(t)
