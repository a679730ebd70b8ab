"""Good sites, renewal candidates, forward conditions and renewal estimators.

A step ``n`` is a *candidate* when the path up to ``n`` lies in the backward
cone of slope ``s`` through ``(n, X_n)`` and every label visited before ``n`` sits
strictly to the left of ``X_n`` at time ``n``.  From a candidate ``tau`` the
forward check looks for

* ``D``: the first ``n`` with ``X_{tau+n} < X_tau + s n`` (path leaves the
  forward cone), and
* ``F``: the first ``n`` at which a label that was left of ``X_tau`` at time
  ``tau`` occupies a site ``x >= X_tau + s n``.

A candidate whose forward check survives the horizon is a renewal; after it,
the search restarts on the shifted process.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit
from scipy import stats

from .engine import EnvSnapshot
from .errors import (BackendError, HorizonError, InsufficientRecords, NoRenewalFound,
                     WindowError)
from .model import epsilon
from .output import comment_line, skip_comments, write_json

ALIVE = -1
_EPS = 1e-12


@dataclass(frozen=True)
class GoodSetQuery:
    L: int
    L_max: int
    rho: float

    def __post_init__(self):
        if self.L < 0 or self.L > self.L_max:
            raise ValueError(f"need 0 <= L <= L_max, got L={self.L}, L_max={self.L_max}")

    @property
    def threshold(self) -> float:
        return (1.0 + epsilon(self.L)) * self.rho


def box_densities(occupancy, center_index: int, L: int, L_max: int) -> np.ndarray:
    """Densities of ``B(x, r)`` for ``r = L..L_max`` where ``x`` sits at
    ``center_index`` of ``occupancy``."""
    occ = np.asarray(occupancy)
    if center_index - L_max < 0 or center_index + L_max >= occ.shape[0]:
        raise WindowError("box exceeds the available sites")
    cs = np.concatenate(([0], np.cumsum(occ, dtype=np.int64)))
    r = np.arange(L, L_max + 1)
    counts = cs[center_index + r + 1] - cs[center_index - r]
    return counts / (2 * r + 1)


def good_site(snapshot: EnvSnapshot, x: int, query: GoodSetQuery) -> bool:
    """True iff every box ``B(x, r)``, ``L <= r <= L_max``, has density at most
    ``(1 + eps_L) rho``."""
    dens = box_densities(snapshot.occupancy, x - snapshot.offset, query.L, query.L_max)
    return bool(np.all(dens <= query.threshold + _EPS))


def good_prefix_check(occ, center_index, L, L_max, threshold):
    return bool(np.all(box_densities(occ, center_index, L, L_max) <= threshold + _EPS))


@dataclass(frozen=True)
class ConeParams:
    slope: float
    source: str = "user"

    def __post_init__(self):
        if not 0.0 < self.slope < 1.0:
            raise ValueError(f"cone slope must lie in (0, 1), got {self.slope}")

    @classmethod
    def from_pilot(cls, v_pilot: float) -> "ConeParams":
        """Default slope ``max(0.05, v/4)`` from a pilot velocity estimate."""
        return cls(min(max(0.05, 0.25 * v_pilot), 0.99), "estimated")


@dataclass(frozen=True)
class ForwardResult:
    D: int
    F: int

    @property
    def alive(self) -> bool:
        return self.D == ALIVE and self.F == ALIVE

    @property
    def H(self) -> str:
        if self.alive:
            return "alive-at-horizon"
        return f"broken-at({self.broken_at})"

    @property
    def broken_at(self) -> int:
        vals = [v for v in (self.D, self.F) if v != ALIVE]
        return min(vals) if vals else ALIVE

    @property
    def D_status(self) -> str:
        return "alive" if self.D == ALIVE else f"broken-at({self.D})"

    @property
    def F_status(self) -> str:
        return "alive" if self.F == ALIVE else f"broken-at({self.F})"


@dataclass(frozen=True)
class RenewalRecord:
    k: int
    tau: int
    X_tau: int
    dt_prev: int
    dX_prev: int
    provisional: bool


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True)
def _visited_ahead(hist, hoff, X, n, last_visit, seg):
    """True if some label read in [seg, n) sits at a site >= X[n] at time n."""
    W = hist.shape[1]
    j0 = X[n] - hoff[n]
    if j0 < 0:
        j0 = 0
    for j in range(W - 1, j0 - 1, -1):
        if last_visit[hist[n, j]] >= seg:
            return True
    return False


@njit(cache=True)
def _rightmost_visited(hist, hoff, rlab, n_labels):
    N = rlab.shape[0]
    W = hist.shape[1]
    seen = np.zeros(n_labels, dtype=np.bool_)
    M = np.full(N + 1, np.iinfo(np.int64).min, dtype=np.int64)
    for n in range(1, N + 1):
        seen[rlab[n - 1]] = True
        for j in range(W - 1, -1, -1):
            if seen[hist[n, j]]:
                M[n] = hoff[n] + j
                break
    return M


@njit(cache=True)
def _forward(hist, hoff, hnew, born_at, X, tau, slope, horizon, in_left):
    W = hist.shape[1]
    xt = X[tau]
    D = -1
    for n in range(1, horizon + 1):
        if X[tau + n] < xt + slope * n - 1e-12:
            D = n
            break
    jt = xt - hoff[tau]
    for j in range(0, min(jt, W)):
        in_left[hist[tau, j]] = True
    new0 = hnew[tau]
    F = -1
    last = horizon if D < 0 else D
    for n in range(1, last + 1):
        row = tau + n
        lo = xt + slope * n
        xmin = int(math.ceil(lo - 1e-12))
        j0 = xmin - hoff[row]
        if j0 < 0:
            j0 = 0
        for j in range(j0, W):
            lab = hist[row, j]
            if in_left[lab] or (lab >= new0 and born_at[lab] < xt):
                F = n
                break
        if F >= 0:
            break
    for j in range(0, min(jt, W)):
        in_left[hist[tau, j]] = False
    return D, F


@njit(cache=True)
def _extract(hist, hoff, hnew, born_at, X, rlab, slope, horizon, guard, n_labels):
    N = rlab.shape[0]
    last_visit = np.full(n_labels, -1, dtype=np.int64)
    in_left = np.zeros(n_labels, dtype=np.bool_)
    taus = []
    prov = []
    n_checked = 0
    seg = 0
    runmax = X[0] - slope * 0.0
    last_visit[rlab[0]] = 0
    n = 1
    while n < N:
        cand = X[n] - slope * n >= runmax - 1e-12
        if cand:
            cand = not _visited_ahead(hist, hoff, X, n, last_visit, seg)
        if cand:
            h = min(horizon, N - n)
            D, F = _forward(hist, hoff, hnew, born_at, X, n, slope, h, in_left)
            n_checked += 1
            if D < 0 and F < 0:
                taus.append(n)
                prov.append(h < horizon or n > N - guard)
                seg = n
                runmax = X[n] - slope * n
                last_visit[rlab[n]] = n
                n += 1
                continue
            b = D
            if b < 0 or (0 <= F < b):
                b = F
            stop = n + b
            if stop > N:
                stop = N
            while n < stop:
                v = X[n] - slope * n
                if v > runmax:
                    runmax = v
                last_visit[rlab[n]] = n
                n += 1
            continue
        v = X[n] - slope * n
        if v > runmax:
            runmax = v
        last_visit[rlab[n]] = n
        n += 1
    return taus, prov, n_checked


# ---------------------------------------------------------------------------

def _require_labels(rec):
    if rec is None or not rec.has_labels:
        raise BackendError("renewal detection needs an EnvRecord with recorded labels "
                           "(run_annealed(..., record=True))")


def rightmost_visited(traj, rec) -> np.ndarray:
    """``M(n)``: rightmost position at time ``n`` of the labels read before ``n``
    (int64 minimum when none is inside the tracked extent)."""
    _require_labels(rec)
    return _rightmost_visited(rec.labels, rec.offsets, traj.read_labels, rec.n_labels)


def find_candidates(traj, rec, cone: ConeParams) -> np.ndarray:
    """All steps ``n`` (from the origin) meeting the backward-cone and
    visited-labels-behind conditions."""
    _require_labels(rec)
    X = traj.positions
    n = np.arange(X.shape[0])
    shifted = X - cone.slope * n
    runmax = np.maximum.accumulate(shifted)
    back = shifted >= runmax - _EPS
    M = rightmost_visited(traj, rec)
    return np.flatnonzero(back & (M < X))


def check_forward(traj, rec, tau: int, cone: ConeParams, horizon: int) -> ForwardResult:
    _require_labels(rec)
    if tau < 0 or tau + horizon > traj.horizon:
        raise HorizonError(f"tau + horizon = {tau + horizon} exceeds trajectory length {traj.horizon}")
    in_left = np.zeros(rec.n_labels, dtype=np.bool_)
    D, F = _forward(rec.labels, rec.offsets, rec.new_from, rec.born_at, traj.positions,
                    int(tau), float(cone.slope), int(horizon), in_left)
    return ForwardResult(int(D), int(F))


def extract_renewals(traj, rec, cone: ConeParams, horizon: int, guard: int | None = None):
    """Renewal records along one trajectory.

    Candidates are scanned in order; a candidate whose forward check survives
    ``min(horizon, steps left)`` steps is a renewal.  Records whose check was
    truncated by the end of the trajectory, or lying within ``guard`` steps of
    it, are flagged provisional.
    """
    _require_labels(rec)
    guard = horizon if guard is None else int(guard)
    taus, prov, n_checked = _extract(rec.labels, rec.offsets, rec.new_from, rec.born_at,
                                     traj.positions, traj.read_labels, float(cone.slope),
                                     int(horizon), guard, rec.n_labels)
    X = traj.positions
    out = []
    prev_t, prev_x = 0, int(X[0])
    for k, (t, p) in enumerate(zip(taus, prov), start=1):
        out.append(RenewalRecord(k, int(t), int(X[t]), int(t - prev_t), int(X[t] - prev_x), bool(p)))
        prev_t, prev_x = int(t), int(X[t])
    if not out:
        warnings.warn(f"no candidate survived the forward check ({n_checked} checked)",
                      NoRenewalFound, stacklevel=2)
    return out


def _used(records, include_provisional=False, skip_first=True):
    recs = [r for r in records if include_provisional or not r.provisional]
    if skip_first:
        recs = [r for r in recs if r.k >= 2]
    dt = np.array([r.dt_prev for r in recs], dtype=float)
    dx = np.array([r.dX_prev for r in recs], dtype=float)
    return dt, dx


@dataclass(frozen=True)
class RenewalEstimate:
    v_hat: float
    sigma2_hat: float
    count: int
    v_ci: tuple
    sigma2_ci: tuple
    mean_dt: float
    mean_dx: float
    sum_dt: float = 0.0
    sum_dx: float = 0.0

    def to_dict(self):
        return asdict(self)


def renewal_estimates(records, include_provisional=False, skip_first=True, level=0.95) -> RenewalEstimate:
    """Ratio-of-means velocity and variance from inter-renewal increments.

    ``v = mean(dX) / mean(dt)`` and ``sigma2 = mean((dX - v dt)^2) / mean(dt)``,
    with delta-method intervals.
    """
    dt, dx = _used(records, include_provisional, skip_first)
    n = dt.shape[0]
    if n < 2:
        raise InsufficientRecords(f"need >= 2 usable records, got {n}")
    mdt, mdx = dt.mean(), dx.mean()
    v = mdx / mdt
    resid = dx - v * dt
    s2 = np.mean(resid ** 2) / mdt
    z = stats.norm.ppf(0.5 + level / 2)
    se_v = math.sqrt(np.mean(resid ** 2) / n) / mdt
    zz = resid ** 2 - s2 * dt
    se_s2 = math.sqrt(np.mean(zz ** 2) / n) / mdt
    return RenewalEstimate(float(v), float(s2), int(n), (v - z * se_v, v + z * se_v),
                           (s2 - z * se_s2, s2 + z * se_s2), float(mdt), float(mdx),
                           float(dt.sum()), float(dx.sum()))


def _lag1(a):
    a = np.asarray(a, dtype=float)
    if a.shape[0] < 3 or np.std(a[:-1]) == 0 or np.std(a[1:]) == 0:
        return 0.0
    return float(np.corrcoef(a[:-1], a[1:])[0, 1])


def renewal_iid_tests(records, include_provisional=False, skip_first=True, n_perm=999,
                      seed=0, min_records=30):
    """Lag-1 correlation of increments, a permutation test of serial
    independence and a tail comparison of ``P(dt > n)`` with ``n^-3``."""
    dt, dx = _used(records, include_provisional, skip_first)
    n = dt.shape[0]
    if n < min_records:
        raise InsufficientRecords(f"need >= {min_records} records, got {n}")
    r_dt, r_dx = _lag1(dt), _lag1(dx)
    half = 1.96 / math.sqrt(n)
    stat = r_dt ** 2 + r_dx ** 2
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(n)
        if _lag1(dt[perm]) ** 2 + _lag1(dx[perm]) ** 2 >= stat - 1e-15:
            hits += 1
    p_value = (hits + 1) / (n_perm + 1)
    grid, surv = tail_survival(dt)
    return {
        "count": int(n),
        "lag1_dt": r_dt, "lag1_dt_ci": [r_dt - half, r_dt + half],
        "lag1_dx": r_dx, "lag1_dx_ci": [r_dx - half, r_dx + half],
        "perm_p_value": float(p_value),
        "tail_grid": grid.tolist(), "tail_survival": surv.tolist(),
        "tail_guide_n^-3": (grid.astype(float) ** -3.0).tolist(),
        "tail_exponent": tail_exponent(dt),
    }


def tail_survival(dt):
    dt = np.sort(np.asarray(dt))
    grid = np.unique(dt)
    surv = 1.0 - np.searchsorted(dt, grid, side="right") / dt.shape[0]
    return grid, surv


def tail_exponent(dt, min_tail=5):
    """Least-squares slope of log P(dt > n) against log n over ``n >= median``,
    keeping points with at least ``min_tail`` exceedances."""
    dt = np.asarray(dt, dtype=float)
    grid, surv = tail_survival(dt)
    keep = (grid >= np.median(dt)) & (surv * dt.shape[0] >= min_tail) & (grid > 0)
    if keep.sum() < 3:
        return float("nan")
    slope, _ = np.polyfit(np.log(grid[keep]), np.log(surv[keep]), 1)
    return float(slope)


def write_renewals_csv(path, records, meta=None):
    with open(path, "w", newline="") as fh:
        if meta is not None:
            fh.write(comment_line(meta))
        w = csv.writer(fh)
        w.writerow(["k", "tau", "X_tau", "dt", "dX", "provisional"])
        for r in records:
            w.writerow([r.k, r.tau, r.X_tau, r.dt_prev, r.dX_prev, int(r.provisional)])


def read_renewals_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(skip_comments(fh)))
    return [RenewalRecord(int(r["k"]), int(r["tau"]), int(r["X_tau"]), int(r["dt"]),
                          int(r["dX"]), bool(int(r["provisional"]))) for r in rows]


def write_diagnostics_json(path, diag):
    write_json(path, diag)
