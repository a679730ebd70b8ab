"""Simple exclusion process via the interchange (stirring) representation.

Every site carries a label; every edge carries a rate-``gamma`` Poisson clock
and a ring exchanges the two labels across the edge.  Labels carry
Bernoulli(rho) types, and the occupancy field is ``type[label at x]``.

Two spatial backends are provided:

``torus``
    ``extent`` sites on a ring.  Labels are conserved, so ``xi`` (label to
    position, with winding numbers) is maintained and labels can be traced.
``reservoir-window``
    An open segment.  Besides the ``extent - 1`` interior edges, each of the two
    end sites has its own rate-``gamma`` clock which replaces its label by a
    fresh one with a fresh Bernoulli(rho) type (a particle/vacancy exchanged
    with the outside).  Product Bernoulli(rho) is stationary.

Within one call to :func:`advance` the number of rings is drawn as a single
Poisson variable and the rung edges are i.i.d. uniform, which is the same law
as independent per-edge clocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import BackendError, ConfigError, WindowError
from .model import ModelParams

BACKENDS = ("torus", "reservoir-window")


@njit(cache=True)
def _uniform_index(rng, n):
    i = int(rng.random() * n)
    if i >= n:
        i = n - 1
    return i


@njit(cache=True)
def _advance_torus(mu, occ, xi, wind, gamma, dt, rng):
    E = mu.shape[0]
    if gamma <= 0.0 or dt <= 0.0:
        return 0
    K = rng.poisson(gamma * E * dt)
    for _ in range(K):
        a = _uniform_index(rng, E)
        b = a + 1
        if b == E:
            b = 0
        la = mu[a]
        lb = mu[b]
        mu[a] = lb
        mu[b] = la
        xi[la] = b
        xi[lb] = a
        t = occ[a]
        occ[a] = occ[b]
        occ[b] = t
        if b == 0:
            wind[la] += 1
            wind[lb] -= 1
    return K


@njit(cache=True)
def _advance_window(mu, occ, head, gamma, rho, dt, rng, next_label):
    """Returns (next_label, n_swaps, n_refresh)."""
    W = mu.shape[0]
    n_swaps = 0
    n_refresh = 0
    if gamma <= 0.0 or dt <= 0.0:
        return next_label, n_swaps, n_refresh
    n_clocks = W + 1
    K = rng.poisson(gamma * n_clocks * dt)
    for _ in range(K):
        e = _uniform_index(rng, n_clocks)
        if e == 0 or e == W:
            s = head if e == 0 else head + W - 1
            if s >= W:
                s -= W
            mu[s] = next_label
            next_label += 1
            occ[s] = 1 if rng.random() < rho else 0
            n_refresh += 1
        else:
            a = head + e - 1
            if a >= W:
                a -= W
            b = a + 1
            if b == W:
                b = 0
            la = mu[a]
            mu[a] = mu[b]
            mu[b] = la
            t = occ[a]
            occ[a] = occ[b]
            occ[b] = t
            n_swaps += 1
    return next_label, n_swaps, n_refresh


def default_extent(horizon: int, gamma: float, buffer: int = 64) -> int:
    """Torus circumference large enough that a walk of ``horizon`` steps never
    feels the wrap-around: ``2 * horizon + ceil(8 sqrt(gamma horizon)) + buffer``."""
    return 2 * int(horizon) + int(math.ceil(8.0 * math.sqrt(gamma * horizon))) + int(buffer)


@dataclass(frozen=True)
class EnvSnapshot:
    time: float
    offset: int
    occupancy: np.ndarray
    label_positions: dict | None = None

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=np.int8)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def extent(self):
        return self.occupancy.shape[0]

    def to_line(self) -> str:
        bits = "".join("1" if b else "0" for b in self.occupancy)
        return f"t={self.time!r} offset={self.offset} bits={bits}"

    @classmethod
    def from_line(cls, line: str) -> "EnvSnapshot":
        fields = dict(tok.split("=", 1) for tok in line.split())
        occ = np.frombuffer(fields["bits"].encode(), dtype=np.uint8) - ord("0")
        return cls(float(fields["t"]), int(fields["offset"]), occ)

    def _prefix(self):
        return np.concatenate(([0], np.cumsum(self.occupancy, dtype=np.int64)))

    def box_density(self, x: int, L: int) -> float:
        lo, hi = x - L - self.offset, x + L - self.offset
        if lo < 0 or hi >= self.extent:
            raise WindowError(f"box B({x},{L}) leaves the snapshot")
        return float(self.occupancy[lo:hi + 1].sum()) / (2 * L + 1)


@dataclass
class EnvState:
    """Mutable interchange-process state on a finite extent.

    ``mu[s]`` is the label at storage slot ``s`` and ``occ[s]`` its type.  On
    the torus slot ``s`` is lattice site ``origin_offset + s``.  On a window the
    slots form a ring buffer whose leftmost site sits in slot ``head``.
    """

    params: ModelParams
    backend: str
    extent: int
    origin_offset: int
    mu: np.ndarray
    occ: np.ndarray
    rng: np.random.Generator
    seed: int
    xi: np.ndarray | None = None
    wind: np.ndarray | None = None
    nu: np.ndarray | None = None
    head: int = 0
    next_label: int = 0
    sim_time: float = 0.0
    n_swaps: int = 0
    n_refresh: int = 0
    metadata: dict = field(default_factory=dict)

    # -- site addressing -------------------------------------------------
    def slot(self, x: int) -> int:
        rel = int(x) - self.origin_offset
        if self.backend == "torus":
            return rel % self.extent
        if rel < 0 or rel >= self.extent:
            raise WindowError(f"site {x} outside window [{self.origin_offset}, "
                              f"{self.origin_offset + self.extent - 1}]")
        return (self.head + rel) % self.extent

    def ordered(self, arr):
        """Slot array rearranged in lattice order from ``origin_offset``."""
        if self.head == 0:
            return arr.copy()
        return np.roll(arr, -self.head)

    def copy(self) -> "EnvState":
        gen = np.random.Generator(type(self.rng.bit_generator)())
        gen.bit_generator.state = self.rng.bit_generator.state
        return EnvState(
            self.params, self.backend, self.extent, self.origin_offset,
            self.mu.copy(), self.occ.copy(), gen, self.seed,
            None if self.xi is None else self.xi.copy(),
            None if self.wind is None else self.wind.copy(),
            None if self.nu is None else self.nu.copy(),
            self.head, self.next_label, self.sim_time, self.n_swaps, self.n_refresh,
            dict(self.metadata),
        )


def _check_backend(backend):
    if backend not in BACKENDS:
        raise ConfigError("engine.backend", f"unknown backend {backend!r}; expected one of {BACKENDS}")


def _build(params, occ, backend, seed, rng, origin):
    _check_backend(backend)
    E = occ.shape[0]
    if origin is None:
        origin = -(E // 2)
    mu = np.arange(E, dtype=np.int64)
    env = EnvState(params, backend, E, int(origin), mu, occ.astype(np.int8), rng, int(seed))
    env.next_label = E
    if backend == "torus":
        env.xi = np.arange(E, dtype=np.int64)
        env.wind = np.zeros(E, dtype=np.int64)
        env.nu = env.occ.copy()
    else:
        env.metadata["boundary_refresh"] = "independent rate-gamma resample clock per end site"
    return env


def init_equilibrium(params: ModelParams, extent: int, backend: str = "torus", seed: int = 0,
                     origin: int | None = None) -> EnvState:
    """Sample product Bernoulli(rho) types on ``extent`` sites, identity labeling."""
    if extent < 3:
        raise ConfigError("engine.extent", f"extent must be >= 3, got {extent}")
    rng = np.random.default_rng(seed)
    occ = (rng.random(int(extent)) < params.rho).astype(np.int8)
    return _build(params, occ, backend, seed, rng, origin)


def init_profile(params: ModelParams, occupancy, backend: str = "torus", seed: int = 0,
                 origin: int | None = None, extent: int | None = None) -> EnvState:
    occ = np.asarray(occupancy).astype(np.int8).ravel()
    if extent is not None and occ.shape[0] != extent:
        raise ConfigError("engine.extent", f"profile length {occ.shape[0]} != extent {extent}")
    if occ.shape[0] < 3:
        raise ConfigError("engine.extent", "profile must cover at least 3 sites")
    if np.any((occ != 0) & (occ != 1)):
        raise ConfigError("profile", "occupancy must be 0/1")
    return _build(params, occ, backend, seed, np.random.default_rng(seed), origin)


def advance(env: EnvState, dt: float) -> EnvState:
    """Run the dynamics for ``dt`` units of time, in place; returns ``env``."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    g = env.params.gamma
    if env.backend == "torus":
        k = _advance_torus(env.mu, env.occ, env.xi, env.wind, g, float(dt), env.rng)
        env.n_swaps += int(k)
    else:
        nl, ns, nr = _advance_window(env.mu, env.occ, env.head, g, env.params.rho,
                                     float(dt), env.rng, env.next_label)
        env.next_label, env.n_swaps, env.n_refresh = int(nl), env.n_swaps + int(ns), env.n_refresh + int(nr)
    env.sim_time += float(dt)
    return env


def occupancy(env: EnvState, x: int) -> int:
    return int(env.occ[env.slot(x)])


def occupancy_field(env: EnvState) -> np.ndarray:
    """Occupancy in lattice order starting at ``origin_offset``."""
    return env.ordered(env.occ)


def empirical_density(env: EnvState, x: int, L: int) -> float:
    """Fraction of occupied sites in ``B(x, L) = [x - L, x + L]``."""
    if L < 0:
        raise ValueError("L must be >= 0")
    n = 2 * L + 1
    if env.backend == "torus":
        if n > env.extent:
            raise WindowError(f"box of {n} sites exceeds torus of {env.extent}")
        idx = (np.arange(x - L, x + L + 1) - env.origin_offset) % env.extent
        return float(env.occ[idx].sum()) / n
    lo = x - L - env.origin_offset
    hi = x + L - env.origin_offset
    if lo < 0 or hi >= env.extent:
        raise WindowError(f"box B({x},{L}) exits the window")
    ordered = env.ordered(env.occ)
    return float(ordered[lo:hi + 1].sum()) / n


def label_positions(env: EnvState, labels) -> np.ndarray:
    """Unwrapped lattice positions of ``labels`` (torus only)."""
    if env.backend != "torus":
        raise BackendError("labels are only conserved on the torus backend")
    labels = np.asarray(labels, dtype=np.int64)
    return env.origin_offset + env.xi[labels] + env.wind[labels] * env.extent


def label_trace(env: EnvState, labels, t_grid) -> np.ndarray:
    """Advance through increasing absolute times ``t_grid``, returning an array
    of shape ``(len(labels), len(t_grid))`` with unwrapped positions."""
    if env.backend != "torus":
        raise BackendError("label_trace requires the torus backend")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0) or (t_grid.size and t_grid[0] < env.sim_time):
        raise ValueError("t_grid must be increasing and not before the current time")
    out = np.empty((len(labels), t_grid.size), dtype=np.int64)
    for j, t in enumerate(t_grid):
        advance(env, t - env.sim_time)
        out[:, j] = label_positions(env, labels)
    return out


def write_label_trace(path, labels, t_grid, trace):
    with open(path, "w") as fh:
        fh.write("label,t,x\n")
        for i, lab in enumerate(labels):
            for j, t in enumerate(t_grid):
                fh.write(f"{int(lab)},{float(t)!r},{int(trace[i, j])}\n")


def snapshot(env: EnvState, with_labels: bool = False) -> EnvSnapshot:
    lp = None
    if with_labels:
        mu = env.ordered(env.mu)
        lp = {int(l): env.origin_offset + i for i, l in enumerate(mu)}
    return EnvSnapshot(env.sim_time, env.origin_offset, env.ordered(env.occ), lp)


def write_snapshots(path, snapshots):
    with open(path, "w") as fh:
        for s in snapshots:
            fh.write(s.to_line() + "\n")


def read_snapshots(path):
    with open(path) as fh:
        return [EnvSnapshot.from_line(line) for line in fh if line.strip()]
