"""Lattice heat kernel, box kernels, mean evolution and the two Monte Carlo
checks built on them (concentration of box averages and trap dissipation).

The kernel solves ``d/dt p = gamma * (p(x+1) + p(x-1) - 2 p(x))`` with
``p(0, .) = delta_0``; in closed form ``p(t, x) = exp(-2 gamma t) I_x(2 gamma t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal, special

from . import engine
from .errors import ConfigError, DomainError, InsufficientData
from .model import ModelParams, epsilon
from .output import comment_line
from .renewal import good_prefix_check
from .seeds import split_seed

SPECTRAL_CROSSOVER = 1.0e4


def _spectral(s, x):
    # p = (1/pi) * int_0^pi exp(-2 s (1 - cos k)) cos(x k) dk, integrand concentrated near 0
    width = min(math.pi, 40.0 / math.sqrt(s))
    f = lambda k: math.exp(-2.0 * s * (1.0 - math.cos(k))) * math.cos(x * k)
    val, _ = integrate.quad(f, 0.0, width, limit=400, epsabs=0.0, epsrel=1e-13)
    return val / math.pi


def heat_kernel(gamma: float, t: float, x):
    """Transition probability ``p(t, x)`` of a rate-``gamma`` symmetric walk
    (each of the two neighbours reached at rate ``gamma``).

    Uses the exponentially scaled Bessel function up to ``gamma * t = 1e4`` and
    a Fourier integral beyond.  ``x`` may be an integer array.
    """
    if t < 0:
        raise DomainError(f"heat_kernel needs t >= 0, got {t}")
    if gamma < 0:
        raise DomainError(f"heat_kernel needs gamma >= 0, got {gamma}")
    xa = np.abs(np.asarray(x, dtype=np.int64))
    s = gamma * t
    if s == 0.0:
        out = (xa == 0).astype(float)
    elif s <= SPECTRAL_CROSSOVER:
        out = special.ive(xa, 2.0 * s)
    else:
        out = np.vectorize(lambda z: _spectral(s, int(z)), otypes=[float])(xa)
    return float(out) if np.ndim(out) == 0 else out


def support_radius(gamma: float, t: float) -> int:
    """Truncation radius ``ceil(2 gamma t + 12 sqrt(gamma t) + 30)``."""
    s = gamma * t
    return int(math.ceil(2.0 * s + 12.0 * math.sqrt(s) + 30.0))


@dataclass(frozen=True)
class KernelTable:
    gamma: float
    t: float
    sites: np.ndarray
    values: np.ndarray
    truncation_eps: float

    def value(self, x: int) -> float:
        r = self.sites[-1]
        return float(self.values[x + r]) if abs(x) <= r else 0.0


def kernel_table(gamma: float, t: float, radius: int | None = None) -> KernelTable:
    r = support_radius(gamma, t) if radius is None else int(radius)
    xs = np.arange(-r, r + 1)
    vals = np.asarray(heat_kernel(gamma, t, xs), dtype=float)
    # mass outside the table; kernel is symmetric, sum the half-line in a stable order
    mass = vals[r] + 2.0 * math.fsum(vals[r + 1:][::-1])
    return KernelTable(gamma, t, xs, vals, max(0.0, 1.0 - mass))


def box_kernels(gamma: float, t: float, x, L: int):
    """Return ``(sum_{|y| <= L} p(t, x + y), that sum / (2L + 1))``."""
    if L < 0:
        raise DomainError("L must be >= 0")
    x = np.asarray(x, dtype=np.int64)
    ys = np.arange(-L, L + 1)
    vals = heat_kernel(gamma, t, x[..., None] + ys)
    bold = np.sum(vals, axis=-1)
    if np.ndim(bold) == 0:
        bold = float(bold)
    return bold, bold / (2 * L + 1)


@dataclass(frozen=True)
class MeanEvolution:
    profile: np.ndarray
    t: float
    values: np.ndarray
    padding: float
    truncation_error: float


def mean_evolution(profile, gamma: float, t: float, padding: float = 0.0) -> MeanEvolution:
    """Expected occupancy ``sum_z p(t, x - z) eta_z`` for a finite profile.

    Sites outside the profile are taken to hold the constant ``padding``
    (0 for an empty outside, 1 for a full one, rho for equilibrium).
    """
    prof = np.asarray(profile, dtype=float).ravel()
    if not 0.0 <= padding <= 1.0:
        raise DomainError("padding must lie in [0, 1]")
    if t == 0 or gamma == 0:
        return MeanEvolution(prof.copy(), float(t), prof.copy(), float(padding), 0.0)
    tab = kernel_table(gamma, t)
    r = tab.sites[-1]
    conv = signal.convolve(prof - padding, tab.values, mode="full", method="auto")
    vals = padding + conv[r:r + prof.size]
    err = tab.truncation_eps * float(np.max(np.abs(prof - padding), initial=0.0))
    return MeanEvolution(prof.copy(), float(t), np.clip(vals, 0.0, 1.0), float(padding), err)


# ---------------------------------------------------------------------------
# concentration of box averages

@dataclass
class ConcentrationTable:
    L: int
    t: float
    a_grid: np.ndarray
    freq: np.ndarray
    replicas: int
    c_hat: float
    c_points: np.ndarray
    fit_mask: np.ndarray
    deviations: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    def rows(self):
        for a, f, c, m in zip(self.a_grid, self.freq, self.c_points, self.fit_mask):
            yield float(a), float(f), float(c), bool(m)


def fit_tail_rate(a_grid, freq, L, lo=1e-3, hi=1e-1):
    """Least-squares slope of ``-ln freq`` against ``a^2 L`` through the origin,
    using only the points whose frequency lies in ``[lo, hi]``."""
    a = np.asarray(a_grid, dtype=float)
    f = np.asarray(freq, dtype=float)
    mask = (f >= lo) & (f <= hi) & (a > 0)
    if not mask.any():
        raise InsufficientData(f"no exceedance frequency inside [{lo}, {hi}]")
    z = a[mask] ** 2 * L
    y = -np.log(f[mask])
    c = float(np.dot(z, y) / np.dot(z, z))
    with np.errstate(divide="ignore", invalid="ignore"):
        pts = np.where(f > 0, -np.log(np.where(f > 0, f, 1.0)) / (a ** 2 * L), np.inf)
    return c, pts, mask


def concentration_check(params: ModelParams, L: int, a_grid, replicas: int, t: float | None = None,
                        seed: int = 0, profile=None) -> ConcentrationTable:
    """Exceedance frequencies of ``<eta(t) - mean(t)>_{0,L}`` over ``a_grid``.

    A single starting profile (an equilibrium sample unless given, centred on
    0) is evolved ``replicas`` times on a torus; the mean evolution comes from
    the kernel.  The default time ``L^2 / 800`` keeps the diffusive spread of
    the box boundary comparable across ``L``.
    """
    if replicas < 1000:
        raise ConfigError("experiment.replicas", "concentration_check needs >= 1000 replicas")
    L = int(L)
    if t is None:
        t = L * L / 800.0
    g = params.gamma
    R = support_radius(g, t)
    E = 2 * (L + R) + 1
    if profile is None:
        prof = (np.random.default_rng(split_seed(seed, 0)).random(E) < params.rho).astype(np.int8)
    else:
        prof = np.asarray(profile, dtype=np.int8)
        if prof.size != E:
            raise ConfigError("experiment.profile", f"profile must have {E} sites")
    origin = -(E // 2)
    c0 = -origin
    # periodic mean on the torus: wrap the kernel around
    tab = kernel_table(g, t, radius=R)
    mean = np.zeros(E)
    for shift, w in zip(tab.sites, tab.values):
        mean += w * np.roll(prof, shift)
    target = float(mean[c0 - L:c0 + L + 1].mean())
    dev = np.empty(replicas)
    for i in range(replicas):
        env = engine.init_profile(params, prof, "torus", seed=split_seed(seed, 1, i), origin=origin)
        engine.advance(env, t)
        dev[i] = env.occ[c0 - L:c0 + L + 1].mean() - target
    a = np.asarray(a_grid, dtype=float)
    freq = np.array([(dev >= ai).mean() for ai in a])
    c, pts, mask = fit_tail_rate(a, freq, L)
    return ConcentrationTable(L, float(t), a, freq, replicas, c, pts, mask, dev,
                              {"gamma": g, "rho": params.rho, "extent": E, "seed": int(seed)})


# ---------------------------------------------------------------------------
# trap dissipation

@dataclass
class DissipationTable:
    l: int
    J: int
    L_max: int
    times: np.ndarray
    p_bad: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    first_passage: np.ndarray
    replicas: int
    gamma: float
    metadata: dict = field(default_factory=dict)

    @property
    def scaled_times(self):
        """Time axis in units of ``l^2 / gamma``."""
        return self.times * self.gamma / max(self.l, 1) ** 2

    @property
    def median_first_passage(self) -> float:
        fp = self.first_passage
        return float(np.median(np.where(np.isfinite(fp), fp, np.inf)))


def wilson_interval(k, n, z=1.96):
    k = np.asarray(k, dtype=float)
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return np.clip(mid - half, 0, 1), np.clip(mid + half, 0, 1)


def default_trap_times(l: int, gamma: float, n: int = 160, span: float = 40.0):
    """Geometric grid from ``l^2/(100 gamma)`` to ``span * l^2 / gamma``."""
    scale = max(l, 1) ** 2 / gamma
    return np.geomspace(scale / 100.0, span * scale, n)


def dissipation_check(l: int, J: int, params: ModelParams, replicas: int, times=None,
                      seed: int = 0, extent: int | None = None, L_max: int | None = None,
                      backend: str = "torus") -> DissipationTable:
    """Plant ones on ``[-l, l]`` (nothing for ``l = 0``) over an equilibrium background and track
    whether 0 is a good site of scale ``J`` along the time grid.

    Returns ``P(0 not good)`` per time with Wilson intervals and, per replica,
    the first grid time at which 0 is good (``inf`` if never).
    """
    l, J = int(l), int(J)
    if l < 0 or J < 1:
        raise ConfigError("experiment.J", "need l >= 0 and J >= 1")
    if l > 0 and J > l:
        raise ConfigError("experiment.J", f"J={J} exceeds trap half-width l={l}")
    if params.gamma <= 0:
        raise ConfigError("model.gamma", "dissipation needs gamma > 0")
    E = int(extent) if extent else max(20 * max(l, J) + 1, 8 * J + 1)
    if E < 20 * l:
        raise ConfigError("engine.extent", "extent must be at least 20 l")
    half = E // 2
    Lm = int(L_max) if L_max else half - 1
    if Lm < J or Lm > half - 1:
        raise ConfigError("experiment.L_max", f"L_max must lie in [J, {half - 1}]")
    times = default_trap_times(l, params.gamma) if times is None else np.asarray(times, float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ConfigError("experiment.times", "time grid must be increasing and >= 0")
    thr = (1.0 + epsilon(J)) * params.rho
    origin = -half
    bad = np.zeros((replicas, times.size), dtype=bool)
    fp = np.full(replicas, np.inf)
    for i in range(replicas):
        rs = np.random.default_rng(split_seed(seed, i, 0))
        prof = (rs.random(E) < params.rho).astype(np.int8)
        if l > 0:
            prof[half - l:half + l + 1] = 1
        env = engine.init_profile(params, prof, backend, seed=split_seed(seed, i, 1), origin=origin)
        for j, t in enumerate(times):
            engine.advance(env, t - env.sim_time)
            occ = engine.occupancy_field(env)
            b = not good_prefix_check(occ, half, J, Lm, thr)
            bad[i, j] = b
            if not b and not np.isfinite(fp[i]):
                fp[i] = t
    k = bad.sum(axis=0)
    lo, hi = wilson_interval(k, replicas)
    return DissipationTable(l, J, Lm, times, k / replicas, lo, hi, fp, replicas, params.gamma,
                            {"rho": params.rho, "extent": E, "backend": backend, "seed": int(seed),
                             "threshold": thr})


def first_passage_exponent(ls, medians):
    """Log-log least-squares slope of median first-passage time against ``l``."""
    x = np.log(np.asarray(ls, dtype=float))
    y = np.log(np.asarray(medians, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# output

def write_kernel_csv(path, table: KernelTable, meta=None):
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(comment_line(meta))
        fh.write("x,value\n")
        for x, v in zip(table.sites, table.values):
            fh.write(f"{int(x)},{float(v)!r}\n")


def write_prob_csv(path, times, prob, lo, hi, meta=None):
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(comment_line(meta))
        fh.write("t,prob,ci_lo,ci_hi\n")
        for row in zip(times, prob, lo, hi):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_concentration_csv(path, table: ConcentrationTable, meta=None):
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(comment_line(meta))
        fh.write("a,freq,c_point,in_fit\n")
        for a, f, c, m in table.rows():
            fh.write(f"{a!r},{f!r},{c!r},{int(m)}\n")
