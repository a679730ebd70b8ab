"""Random walk in a frozen environment: potential, exit probabilities,
excursion brackets and the ballistic/sub-ballistic classification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg, special

from .errors import RangeError, SpanError
from .model import BOUNDARY_TOL, ModelParams, static_functionals
from .output import comment_line
from .seeds import split_seed
from .walker import run_quenched_static, sample_static_environment

STATIC_CLASSES = (
    "transient-right-ballistic",
    "transient-right-subballistic",
    "recurrent",
    "transient-left-ballistic",
    "transient-left-subballistic",
)


@dataclass(frozen=True)
class StaticPotential:
    """``V`` on sites ``lo..hi`` with ``V(0) = 0`` and
    ``V(i+1) - V(i) = ln((1 - w_{i+1}) / w_{i+1})``.

    ``omega[k]`` and ``V[k]`` refer to site ``lo + k``.
    """

    omega: np.ndarray
    V: np.ndarray
    lo: int

    @property
    def hi(self) -> int:
        return self.lo + self.V.size - 1

    @property
    def span(self):
        return self.lo, self.hi

    def at(self, i: int) -> float:
        return float(self.V[i - self.lo])

    def omega_from_increments(self):
        """Rebuild ``omega`` at sites ``lo+1..hi`` from the increments of ``V``."""
        return 1.0 / (1.0 + np.exp(np.diff(self.V)))


def potential(omega, lo: int | None = None) -> StaticPotential:
    """Build ``V`` for probabilities ``omega`` on sites ``lo, lo+1, ...``.

    By default the array is centred so that site 0 sits at index ``len//2``.
    Site 0 must be inside the span.
    """
    w = np.asarray(omega, dtype=float).ravel()
    if w.size == 0:
        raise SpanError("empty environment")
    if np.any(~np.isfinite(w)) or np.any(w <= 0.0) or np.any(w >= 1.0):
        raise RangeError("omega", None, "omega values must lie strictly inside (0, 1)")
    if lo is None:
        lo = -(w.size // 2)
    lo = int(lo)
    if not lo <= 0 <= lo + w.size - 1:
        raise SpanError("site 0 must lie inside the environment span")
    inc = np.log1p(-w) - np.log(w)  # ln((1-w)/w), increment into site i
    k0 = -lo
    V = np.zeros(w.size)
    # right of 0: V(i) = sum_{j=1..i} inc(j); left: V(i) = -sum_{j=i+1..0} inc(j)
    V[k0 + 1:] = np.cumsum(inc[k0 + 1:])
    if k0 > 0:
        V[:k0] = -np.cumsum(inc[1:k0 + 1][::-1])[::-1]
    return StaticPotential(w, V, lo)


def _check_span(pot, a, b):
    if a > b:
        raise SpanError(f"empty range [{a}, {b}]")
    if a < pot.lo or b > pot.hi:
        raise SpanError(f"range [{a}, {b}] not covered by potential on [{pot.lo}, {pot.hi}]")


def exit_left_prob(pot: StaticPotential, a: int) -> float:
    """Probability that the walk from 0 reaches ``-a`` before ``1``:
    ``1 / sum_{i=-a}^{0} exp(V(i))``, summed in log space."""
    a = int(a)
    if a < 1:
        raise SpanError("depth a must be >= 1")
    _check_span(pot, -a, 1)
    seg = pot.V[-a - pot.lo:1 - pot.lo]
    return float(math.exp(-special.logsumexp(seg)))


def exit_prob_oracle(omega, a: int, b: int, lo: int | None = None) -> float:
    """``P(hit -a before b | start 0)`` by solving the harmonic equations on
    ``-a+1..b-1`` directly (banded Gaussian elimination)."""
    w = np.asarray(omega, dtype=float).ravel()
    if lo is None:
        lo = -(w.size // 2)
    a, b = int(a), int(b)
    if a < 1 or b < 1:
        raise SpanError("need a >= 1 and b >= 1")
    if -a + 1 < lo or b - 1 > lo + w.size - 1:
        raise SpanError("omega does not cover the interior of [-a, b]")
    n = a + b - 1
    ws = w[(-a + 1) - lo:(b - 1) - lo + 1]
    # h(x) - w h(x+1) - (1-w) h(x-1) = 0, h(-a)=1, h(b)=0
    ab = np.zeros((3, n))
    ab[0, 1:] = -ws[:-1]
    ab[1, :] = 1.0
    ab[2, :-1] = -(1.0 - ws[1:])
    rhs = np.zeros(n)
    rhs[0] = 1.0 - ws[0]
    h = linalg.solve_banded((1, 1), ab, rhs)
    # the system is badly conditioned for steep environments; a few rounds of
    # iterative refinement with extended-precision residuals recover the digits
    wl = ws.astype(np.longdouble)
    for _ in range(3):
        hl = h.astype(np.longdouble)
        r = rhs.astype(np.longdouble) - hl
        r[:-1] += wl[:-1] * hl[1:]
        r[1:] += (1 - wl[1:]) * hl[:-1]
        h = h + linalg.solve_banded((1, 1), ab, r.astype(float))
    return float(h[a - 1])


@dataclass(frozen=True)
class ExcursionStat:
    bracket: float
    i: int
    j: int


def excursion_bracket(pot: StaticPotential, a: int, b: int) -> ExcursionStat:
    """``max{V(j) - V(i) : a <= i <= j <= b}`` in one sweep with a running minimum."""
    _check_span(pot, a, b)
    V = pot.V[a - pot.lo:b - pot.lo + 1]
    best, bi, bj = 0.0, a, a
    mn, mi = V[0], 0
    for k in range(V.size):
        if V[k] < mn:
            mn, mi = V[k], k
        if V[k] - mn > best:
            best, bi, bj = float(V[k] - mn), a + mi, a + k
    return ExcursionStat(best, bi, bj)


@dataclass(frozen=True)
class StaticClassification:
    label: str
    transience_lhs: float
    jensen_lhs: float
    boundary: bool

    def to_json(self, **kw):
        return json.dumps({"classification": self.label, "transience_lhs": self.transience_lhs,
                           "jensen_lhs": self.jensen_lhs, "boundary": self.boundary}, **kw)


def static_classify(params: ModelParams) -> StaticClassification:
    """Direction from the sign of ``E ln((1-w)/w)``; ballistic iff the
    matching odds moment ``E (1-w)/w`` (or ``E w/(1-w)`` to the left) is < 1."""
    t, s_right, s_left = static_functionals(params)
    if t < 0:
        s = s_right
        label = "transient-right-" + ("ballistic" if s < 1.0 else "subballistic")
    elif t > 0:
        s = s_left
        label = "transient-left-" + ("ballistic" if s < 1.0 else "subballistic")
    else:
        s = s_right
        label = "recurrent"
    boundary = abs(t) < BOUNDARY_TOL or (t != 0 and abs(s - 1.0) < BOUNDARY_TOL)
    return StaticClassification(label, t, s_right, bool(boundary))


# ---------------------------------------------------------------------------
# hitting-time bound on a reflected chain

def reflected_exit_times(omega, left: int, right: int, walks: int, seed: int,
                         lo: int | None = None) -> np.ndarray:
    """Exit times at ``right`` for walks started at 0 with a reflecting wall at
    ``left`` (from ``left`` the walk steps right with probability 1)."""
    w = np.asarray(omega, dtype=float).ravel()
    if lo is None:
        lo = -(w.size // 2)
    if left < lo or right - 1 > lo + w.size - 1 or not left <= 0 < right:
        raise SpanError("omega must cover [left, right-1] around 0")
    ws = w[left - lo:right - lo].copy()
    ws[0] = 1.0
    return _reflected_times(ws, -left, right - left, walks, np.random.default_rng(seed))


@njit(cache=True)
def _reflected_kernel(ws, start, target, rng, out):
    for k in range(out.shape[0]):
        i = start
        n = 0
        while i < target:
            if rng.random() < ws[i]:
                i += 1
            else:
                i -= 1
            n += 1
        out[k] = n


def _reflected_times(ws, start, target, walks, rng):
    out = np.empty(walks, dtype=np.int64)
    _reflected_kernel(ws, start, target, rng, out)
    return out


def hitting_time_bound(omega, left: int, right: int, w_min: float | None = None,
                       lo: int | None = None) -> float:
    """``(right - left)^2 * exp([V]_{left, right}) / w_min``.

    ``w_min`` defaults to the smallest right-step probability on the span.
    """
    pot = potential(omega, lo)
    a, b = max(left, pot.lo), min(right, pot.hi)
    if w_min is None:
        w_min = float(pot.omega[a - pot.lo:b - pot.lo + 1].min())
    br = excursion_bracket(pot, a, b).bracket
    return (right - left) ** 2 * math.exp(br) / w_min


# ---------------------------------------------------------------------------
# path exponent

def path_exponent(positions, grid) -> float:
    """Least-squares slope of ``log(1 + M_n)`` against ``log n`` over ``grid``,
    where ``M_n`` is the running maximum of the path (clipped at 0).

    The running maximum keeps the fit defined for slow walks that are still
    left of the start at early times.  ``nan`` if the path never moved right.
    """
    n = np.asarray(grid, dtype=np.int64)
    m = np.maximum.accumulate(np.asarray(positions))[n].astype(float)
    m = np.maximum(m, 0.0)
    if np.all(m == m[0]):
        return float("nan")
    return float(np.polyfit(np.log(n), np.log1p(m), 1)[0])


def subballistic_exponent(params: ModelParams, horizon: int, grid, seed: int, walks: int = 1):
    """Median fitted exponent of ``X_n`` over ``walks`` frozen environments."""
    exps = []
    for i in range(walks):
        w = sample_static_environment(params, 2 * horizon + 3, split_seed(seed, i, 0))
        tr = run_quenched_static(w, horizon, split_seed(seed, i, 1),
                                 allow_degenerate=params.allow_degenerate)
        exps.append(path_exponent(tr.positions, grid))
    return float(np.nanmedian(exps)), np.array(exps)


# ---------------------------------------------------------------------------
# files

def read_environment(path) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for line in fh:
            s = line.strip()
            if s and not s.startswith("#"):  # metadata or comments
                vals.append(float(s))
    return np.array(vals)


def write_environment(path, omega, meta=None):
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(comment_line(meta))
        for w in np.asarray(omega, dtype=float):
            fh.write(f"{float(w)!r}\n")


def write_exit_table(path, rows, meta=None):
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(comment_line(meta))
        fh.write("a,formula,oracle,abs_diff\n")
        for a, f, o in rows:
            f, o = float(f), float(o)
            fh.write(f"{int(a)},{f!r},{o!r},{abs(f - o)!r}\n")
