"""Model parameters, scale sequences and closed-form regime functionals."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, EllipticityError, RangeError

BOUNDARY_TOL = 1e-9

CLASSIFICATIONS = (
    "fluid-right-drift",
    "fluid-left-drift",
    "static-transient-right",
    "static-recurrent",
    "static-transient-left",
    "static-subballistic",
    "mixed-regime",
)


@dataclass(frozen=True)
class ModelParams:
    """Walker probabilities on occupied/vacant sites, particle density and jump rate.

    ``alpha`` is the probability to step right from an occupied site, ``beta``
    from a vacant one.  ``gamma`` is the exchange rate per edge; ``gamma == 0``
    freezes the environment.
    """

    alpha: float
    beta: float
    rho: float
    gamma: float
    allow_degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ("alpha", "beta", "rho", "gamma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise RangeError(name, v, f"{name} must be a finite real, got {v!r}")
            object.__setattr__(self, name, float(v))
        for name in ("alpha", "beta", "rho"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise RangeError(name, v)
        if self.gamma < 0:
            raise RangeError("gamma", self.gamma)
        if not self.allow_degenerate:
            for name in ("alpha", "beta"):
                v = getattr(self, name)
                if v in (0.0, 1.0):
                    raise EllipticityError(name, v)

    @property
    def static(self) -> bool:
        return self.gamma == 0.0

    def omega(self, occupied):
        """Right-step probability for an occupancy bit (or array of bits)."""
        return np.where(np.asarray(occupied) != 0, self.alpha, self.beta)

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "rho": self.rho, "gamma": self.gamma}


def make_params(alpha, beta, rho, gamma, allow_degenerate=False) -> ModelParams:
    """Validate and bundle the four model parameters.

    Both orientations ``alpha < beta`` and ``alpha > beta`` are accepted.
    """
    return ModelParams(alpha, beta, rho, gamma, allow_degenerate=allow_degenerate)


def epsilon(L):
    """Density tolerance ``1 / (1 + ln(L + 1))`` for box radius ``L >= 0``."""
    a = np.asarray(L, dtype=float)
    if np.any(a < 0):
        raise DomainError(f"epsilon requires L >= 0, got {L!r}")
    out = 1.0 / (1.0 + np.log1p(a))
    return float(out) if out.ndim == 0 else out


def phi(L):
    """Trap scale ``L ** (1/100)``, returned as a real (callers floor if needed)."""
    a = np.asarray(L, dtype=float)
    if np.any(a < 0):
        raise DomainError(f"phi requires L >= 0, got {L!r}")
    out = np.power(a, 0.01)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScaleSequences:
    epsilon: object = epsilon
    phi: object = phi


def scale_sequences() -> ScaleSequences:
    return ScaleSequences()


def _log_odds(p):
    if p in (0.0, 1.0):
        return math.copysign(math.inf, 0.5 - p)
    return math.log((1.0 - p) / p)


def _odds(p):
    return math.inf if p == 0.0 else (1.0 - p) / p


def _inv_odds(p):
    return math.inf if p == 1.0 else p / (1.0 - p)


def _mix(rho, a, b):
    # rho * a + (1 - rho) * b with 0 * inf treated as 0
    ta = 0.0 if rho == 0.0 else rho * a
    tb = 0.0 if rho == 1.0 else (1.0 - rho) * b
    return ta + tb


@dataclass(frozen=True)
class RegimeReport:
    homogenized_p: float
    homogenized_drift: float
    transience_lhs: float
    jensen_lhs: float
    kappa: float
    classification: str
    flags: tuple = ()

    def to_json(self, **kw):
        d = asdict(self)
        d["flags"] = list(self.flags)
        return json.dumps(d, **kw)


def homogenized_p(params: ModelParams) -> float:
    return params.rho * params.alpha + (1.0 - params.rho) * params.beta


def static_functionals(params: ModelParams):
    """Return (E ln((1-w)/w), E (1-w)/w, E w/(1-w)) under the product measure."""
    a, b, r = params.alpha, params.beta, params.rho
    t = _mix(r, _log_odds(a), _log_odds(b))
    s_right = _mix(r, _odds(a), _odds(b))
    s_left = _mix(r, _inv_odds(a), _inv_odds(b))
    return t, s_right, s_left


def _static_flags(t, s_right, s_left):
    flags = []
    if t < 0:
        flags.append("static-transient-right")
        if s_right >= 1.0:
            flags.append("static-subballistic")
    elif t > 0:
        flags.append("static-transient-left")
        if s_left >= 1.0:
            flags.append("static-subballistic")
    else:
        flags.append("static-recurrent")
    return flags


def regime_report(params: ModelParams) -> RegimeReport:
    p = homogenized_p(params)
    drift = 2.0 * p - 1.0
    t, s_right, s_left = static_functionals(params)
    kappa = min(params.alpha, 1 - params.alpha, params.beta, 1 - params.beta)

    flags = []
    if drift > 0:
        flags.append("fluid-right-drift")
    elif drift < 0:
        flags.append("fluid-left-drift")
    flags += _static_flags(t, s_right, s_left)
    mixed = (drift < 0 and t < 0) or (drift > 0 and t > 0)
    if mixed:
        flags.append("mixed-regime")

    if mixed:
        cls = "mixed-regime"
    elif "static-subballistic" in flags:
        cls = "static-subballistic"
    elif drift > 0:
        cls = "fluid-right-drift"
    elif drift < 0:
        cls = "fluid-left-drift"
    else:
        cls = [f for f in flags if f.startswith("static-")][0]
    return RegimeReport(p, drift, t, s_right, kappa, cls, tuple(flags))
