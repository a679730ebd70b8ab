"""Discrete-time walker driven by a live exclusion environment.

Scheduling: at integer time ``k`` the walker reads the occupancy under itself,
steps right with probability ``alpha`` (occupied) or ``beta`` (vacant) using one
uniform from its own stream, then the environment runs for one unit of time.

On the ``reservoir-window`` backend the window follows the walker: after every
step it is shifted by one site so the walker stays at index ``extent // 2``.
The site that enters carries a fresh label with a fresh Bernoulli(rho) type and
the label of the site that leaves is dropped.  Because label motion does not
depend on types, an unvisited label's type is independent of everything the
walker has seen, so the only approximation is forgetting labels that drift
farther than ``extent // 2`` from the walker.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import engine
from .engine import _advance_torus, _uniform_index
from .errors import ConfigError, RangeError, WindowError
from .model import ModelParams

WALKER_BACKENDS = ("torus", "reservoir-window")


def default_window(gamma: float) -> int:
    """Width of the walker-centred window used when none is configured.

    About ``2000 / gamma`` sites, odd, clipped to ``[33, 129]``.  Velocities at
    gamma in {0.01, 20, 30, 100} did not move by more than one standard error
    when the window was widened to 129 sites or more.  Narrower windows bias small-gamma runs, and
    the cost per step grows like ``gamma * width``.
    """
    if gamma <= 0:
        return MAX_WINDOW
    return int(min(MAX_WINDOW, max(MIN_WINDOW, 2 * math.ceil(1000.0 / gamma) + 1)))


MIN_WINDOW, MAX_WINDOW = 33, 129


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True)
def _walk_torus(mu, occ, xi, wind, origin, gamma, alpha, beta, u, rng, X, obs, rlab,
                record, hist, hoff):
    E = mu.shape[0]
    N = u.shape[0]
    R = hist.shape[1]
    half = R // 2
    x = X[0]
    events = 0
    for k in range(N + 1):
        if record:
            left = x - half
            s0 = (left - origin) % E
            for j in range(R):
                s = s0 + j
                if s >= E:
                    s -= E
                hist[k, j] = mu[s]
            hoff[k] = left
        if k == N:
            break
        s = (x - origin) % E
        o = occ[s]
        obs[k] = o
        rlab[k] = mu[s]
        p = alpha if o == 1 else beta
        if u[k] < p:
            x += 1
        else:
            x -= 1
        X[k + 1] = x
        events += _advance_torus(mu, occ, xi, wind, gamma, 1.0, rng)
    return events


@njit(cache=True)
def _walk_window_types(occ, gamma, rho, alpha, beta, u, rng, X, obs):
    """Moving reservoir window tracking types only (no labels)."""
    W = occ.shape[0]
    N = u.shape[0]
    head = 0
    c = W // 2
    x = X[0]
    n_clocks = W + 1
    rate = gamma * n_clocks
    events = 0
    for k in range(N):
        s = head + c
        if s >= W:
            s -= W
        o = occ[s]
        obs[k] = o
        p = alpha if o == 1 else beta
        step = 1 if u[k] < p else -1
        x += step
        X[k + 1] = x
        if rate > 0.0:
            K = rng.poisson(rate)
            events += K
            for _ in range(K):
                e = _uniform_index(rng, n_clocks)
                if e == 0 or e == W:
                    s = head if e == 0 else head + W - 1
                    if s >= W:
                        s -= W
                    occ[s] = 1 if rng.random() < rho else 0
                else:
                    a = head + e - 1
                    if a >= W:
                        a -= W
                    b = a + 1
                    if b == W:
                        b = 0
                    ta = occ[a]
                    tb = occ[b]
                    if ta != tb:
                        occ[a] = tb
                        occ[b] = ta
        if step == 1:
            s = head
            head += 1
            if head == W:
                head = 0
        else:
            head -= 1
            if head < 0:
                head = W - 1
            s = head
        occ[s] = 1 if rng.random() < rho else 0
    return events


@njit(cache=True)
def _grow(a, need):
    n = a.shape[0]
    while n <= need:
        n *= 2
    b = np.zeros(n, dtype=a.dtype)
    b[:a.shape[0]] = a
    return b


@njit(cache=True)
def _walk_window_labels(mu, occ, next_label, gamma, rho, alpha, beta, u, rng, X, obs, rlab,
                        born_at, record, hist, hoff, hnew):
    W = mu.shape[0]
    N = u.shape[0]
    head = 0
    c = W // 2
    x = X[0]
    off = x - c
    n_clocks = W + 1
    rate = gamma * n_clocks
    events = 0
    for k in range(N + 1):
        if record:
            for j in range(W):
                s = head + j
                if s >= W:
                    s -= W
                hist[k, j] = mu[s]
            hoff[k] = off
            hnew[k] = next_label
        if k == N:
            break
        s = head + c
        if s >= W:
            s -= W
        o = occ[s]
        obs[k] = o
        rlab[k] = mu[s]
        p = alpha if o == 1 else beta
        step = 1 if u[k] < p else -1
        x += step
        X[k + 1] = x
        if rate > 0.0:
            K = rng.poisson(rate)
            events += K
            if next_label + K + 2 >= born_at.shape[0]:
                born_at = _grow(born_at, next_label + K + 2)
            for _ in range(K):
                e = _uniform_index(rng, n_clocks)
                if e == 0 or e == W:
                    s = head if e == 0 else head + W - 1
                    if s >= W:
                        s -= W
                    mu[s] = next_label
                    born_at[next_label] = off if e == 0 else off + W - 1
                    next_label += 1
                    occ[s] = 1 if rng.random() < rho else 0
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
        if next_label + 2 >= born_at.shape[0]:
            born_at = _grow(born_at, next_label + 2)
        if step == 1:
            s = head
            head += 1
            if head == W:
                head = 0
            off += 1
            born_at[next_label] = off + W - 1
        else:
            head -= 1
            if head < 0:
                head = W - 1
            s = head
            off -= 1
            born_at[next_label] = off
        mu[s] = next_label
        next_label += 1
        occ[s] = 1 if rng.random() < rho else 0
    return events, next_label, born_at


@njit(cache=True)
def _walk_static(omega, start, u, X):
    n = omega.shape[0]
    i = start
    for k in range(u.shape[0]):
        if i < 0 or i >= n:
            return k
        if u[k] < omega[i]:
            i += 1
            X[k + 1] = X[k] + 1
        else:
            i -= 1
            X[k + 1] = X[k] - 1
    return -1


# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    positions: np.ndarray
    observations: np.ndarray | None
    seed_walker: int
    seed_env: int | None = None
    read_labels: np.ndarray | None = None
    start: tuple = (0, 0)
    params: ModelParams | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.positions)

    @property
    def visited_labels(self) -> np.ndarray:
        """Labels read by the walker, deduplicated, in order of first visit."""
        if self.read_labels is None:
            return np.empty(0, dtype=np.int64)
        _, first = np.unique(self.read_labels, return_index=True)
        return self.read_labels[np.sort(first)]

    def header(self) -> dict:
        meta = {"seed_walker": int(self.seed_walker),
                "seed_env": None if self.seed_env is None else int(self.seed_env),
                "start": list(self.start), "horizon": self.horizon}
        if self.params is not None:
            meta["params"] = self.params.to_dict()
        meta.update(self.metadata)
        return meta

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
            fh.write("k,X_k,occ_bit\n")
            obs = self.observations
            for k, x in enumerate(self.positions):
                bit = "" if obs is None or k >= obs.shape[0] else str(int(obs[k]))
                fh.write(f"{k},{int(x)},{bit}\n")


def read_trajectory_csv(path):
    """Returns (header dict, positions, observation bits) from a trajectory CSV."""
    with open(path) as fh:
        head = json.loads(fh.readline()[2:])
        fh.readline()
        xs, bits = [], []
        for line in fh:
            k, x, b = line.rstrip("\n").split(",")
            xs.append(int(x))
            if b != "":
                bits.append(int(b))
    return head, np.array(xs, dtype=np.int64), np.array(bits, dtype=np.int8)


@dataclass
class EnvRecord:
    """Label data on the tracked extent at integer times ``0..N``.

    ``labels[k, j]`` is the label at site ``offsets[k] + j`` at time ``k``.
    ``new_from[k]`` is the smallest label id created after time ``k`` and
    ``born_at[l]`` is the site where label ``l`` was first observed (its
    position at time 0 for labels present from the start).
    """

    backend: str
    extent: int
    labels: np.ndarray | None
    offsets: np.ndarray | None
    new_from: np.ndarray | None
    born_at: np.ndarray | None
    n_labels: int
    events: int
    final_state: object = None
    metadata: dict = field(default_factory=dict)

    @property
    def has_labels(self) -> bool:
        return self.labels is not None


def _seed_int(seed):
    return int(seed) & ((1 << 64) - 1)


def run_annealed(params: ModelParams, horizon: int, seed_env: int, seed_walker: int,
                 backend: str = "reservoir-window", extent: int | None = None,
                 record: bool = False, track_labels: bool | None = None):
    """Run one walker in a fresh equilibrium environment.

    Returns ``(Trajectory, EnvRecord)``.  ``record=True`` stores the label of
    every tracked site at every integer time (memory ``horizon * extent``), as
    needed by renewal detection.  With ``gamma == 0`` the environment is frozen
    and the torus backend is used whatever ``backend`` says.
    """
    N = int(horizon)
    if N < 1:
        raise ConfigError("run.horizon", "horizon must be >= 1")
    if backend not in WALKER_BACKENDS:
        raise ConfigError("engine.backend", f"unknown backend {backend!r}")
    if params.gamma == 0.0:
        backend = "torus"
    if track_labels is None:
        track_labels = record or backend == "torus"
    u = np.random.default_rng(seed_walker).random(N)
    X = np.zeros(N + 1, dtype=np.int64)
    obs = np.zeros(N, dtype=np.int8)
    a, b, rho, g = params.alpha, params.beta, params.rho, params.gamma

    if backend == "torus":
        E = int(extent) if extent else engine.default_extent(N, g)
        if E < 2 * N + 3:
            raise WindowError(f"torus of {E} sites cannot contain a walk of {N} steps")
        env = engine.init_equilibrium(params, E, "torus", seed_env)
        rlab = np.zeros(N, dtype=np.int64)
        # the recorded view is narrower than the torus by N + 1 sites so that
        # views taken up to N steps apart never wrap onto each other
        R = E - N - 1
        hist = np.zeros((N + 1, R) if record else (1, 1), dtype=np.int32)
        hoff = np.zeros(N + 1, dtype=np.int64)
        ev = _walk_torus(env.mu, env.occ, env.xi, env.wind, env.origin_offset, g, a, b, u,
                         env.rng, X, obs, rlab, record, hist, hoff)
        env.sim_time = float(N)
        env.n_swaps += int(ev)
        rec = EnvRecord("torus", E, hist if record else None, hoff if record else None,
                        np.full(N + 1, E, dtype=np.int64) if record else None,
                        (np.arange(E, dtype=np.int64) + env.origin_offset) if record else None,
                        E, int(ev), env)
    else:
        W = int(extent) if extent else default_window(g)
        if W < 3:
            raise ConfigError("engine.extent", "window must have at least 3 sites")
        rng = np.random.default_rng(seed_env)
        occ = (rng.random(W) < rho).astype(np.int8)
        if not track_labels:
            ev = _walk_window_types(occ, g, rho, a, b, u, rng, X, obs)
            rlab = None
            rec = EnvRecord("reservoir-window", W, None, None, None, None, 0, int(ev))
        else:
            mu = np.arange(W, dtype=np.int64)
            rlab = np.zeros(N, dtype=np.int64)
            born = np.zeros(2 * W + N + 1024, dtype=np.int64)
            born[:W] = np.arange(W) - W // 2
            hist = np.zeros((N + 1, W) if record else (1, 1), dtype=np.int32)
            hoff = np.zeros(N + 1, dtype=np.int64)
            hnew = np.zeros(N + 1, dtype=np.int64)
            ev, nl, born = _walk_window_labels(mu, occ, W, g, rho, a, b, u, rng, X, obs, rlab,
                                               born, record, hist, hoff, hnew)
            rec = EnvRecord("reservoir-window", W, hist if record else None,
                            hoff if record else None, hnew if record else None,
                            born[:nl].copy(), int(nl), int(ev))
        rec.metadata["window_policy"] = "walker-centred, fresh Bernoulli(rho) entries"
    traj = Trajectory(X, obs, _seed_int(seed_walker), _seed_int(seed_env), rlab,
                      params=params, metadata={"backend": rec.backend, "extent": rec.extent})
    return traj, rec


def run_quenched_static(omega, horizon: int, seed_walker: int, origin: int | None = None,
                        allow_degenerate: bool = False) -> Trajectory:
    """Walk ``horizon`` steps from 0 in the frozen environment ``omega``.

    ``omega[i]`` is the right-step probability at site ``origin + i``; by
    default the array is centred on 0.
    """
    omega = np.asarray(omega, dtype=float)
    lo_ok = omega >= 0 if allow_degenerate else omega > 0
    hi_ok = omega <= 1 if allow_degenerate else omega < 1
    if not np.all(lo_ok & hi_ok):
        raise RangeError("omega", None, "omega values must lie in (0, 1)")
    if origin is None:
        origin = -((omega.shape[0] - 1) // 2)
    start = -int(origin)
    if not 0 <= start < omega.shape[0]:
        raise WindowError("site 0 is not covered by omega")
    N = int(horizon)
    u = np.random.default_rng(seed_walker).random(N)
    X = np.zeros(N + 1, dtype=np.int64)
    k = _walk_static(omega, start, u, X)
    if k >= 0:
        raise WindowError(f"walker left the environment at step {k}")
    return Trajectory(X, None, _seed_int(seed_walker), None, None,
                      metadata={"backend": "static", "origin": int(origin)})


def sample_static_environment(params: ModelParams, n_sites: int, seed: int) -> np.ndarray:
    """i.i.d. two-valued environment: ``alpha`` w.p. ``rho`` else ``beta``."""
    occ = np.random.default_rng(seed).random(int(n_sites)) < params.rho
    return np.where(occ, params.alpha, params.beta)
