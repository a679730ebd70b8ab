"""Replica-level statistics: direct velocity, CLT diagnostics, mergeable
moment summaries and gamma scans."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import renewal
from .errors import ConfigError, InsufficientData, InsufficientRecords, NoRenewalFound, SepwalkError
from .model import ModelParams
from .output import comment_line, skip_comments
from .seeds import replica_seeds, split_seed
from .walker import run_annealed


# ---------------------------------------------------------------------------
# mergeable moments

@dataclass(frozen=True)
class Moments:
    """Count, mean vector and centred cross-product matrix of ``k`` variables.

    ``merge`` uses the pairwise update of Chan et al., so summaries computed on
    disjoint replica sets combine to the moments of the union.
    """

    n: int
    mean: np.ndarray
    comoment: np.ndarray

    @classmethod
    def empty(cls, k: int) -> "Moments":
        return cls(0, np.zeros(k), np.zeros((k, k)))

    @classmethod
    def of(cls, data) -> "Moments":
        x = np.atleast_2d(np.asarray(data, dtype=float))
        if x.shape[0] == 0:
            return cls.empty(x.shape[1])
        m = x.mean(axis=0)
        d = x - m
        return cls(x.shape[0], m, d.T @ d)

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        C = self.comoment + other.comoment + np.outer(delta, delta) * (self.n * other.n / n)
        return Moments(n, mean, C)

    @property
    def cov(self) -> np.ndarray:
        """Population covariance (divides by ``n``)."""
        return self.comoment / self.n

    def var(self, ddof: int = 1) -> np.ndarray:
        return np.diag(self.comoment) / (self.n - ddof)


def merge_all(summaries):
    it = iter(summaries)
    acc = next(it)
    for s in it:
        acc = acc.merge(s)
    return acc


def renewal_from_moments(m: Moments, level: float = 0.95) -> renewal.RenewalEstimate:
    """Renewal estimator from merged ``(dt, dX)`` moments.

    Agrees with :func:`renewal.renewal_estimates` on the pooled records.
    """
    if m.n < 2:
        raise InsufficientRecords(f"need >= 2 usable records, got {m.n}")
    mdt, mdx = m.mean
    v = mdx / mdt
    C = m.cov
    # mean of (dx - v dt)^2 = Var(dx - v dt) + (mdx - v mdt)^2, second term is 0
    ms = C[1, 1] - 2 * v * C[0, 1] + v * v * C[0, 0]
    s2 = ms / mdt
    z = stats.norm.ppf(0.5 + level / 2)
    se_v = math.sqrt(ms / m.n) / mdt
    return renewal.RenewalEstimate(float(v), float(s2), int(m.n), (v - z * se_v, v + z * se_v),
                                   (float("nan"), float("nan")), float(mdt), float(mdx),
                                   float(mdt * m.n), float(mdx * m.n))


# ---------------------------------------------------------------------------
# direct velocity and CLT diagnostics

@dataclass(frozen=True)
class VelocityEstimate:
    v: float
    lo: float
    hi: float
    se: float
    n: int
    horizon: int


def _endpoints(trajectories, horizon=None):
    if isinstance(trajectories, np.ndarray) and trajectories.dtype != object:
        if horizon is None:
            raise ValueError("horizon is required when passing raw endpoints")
        return trajectories.astype(float), int(horizon)
    ends, Ns = [], set()
    for tr in trajectories:
        ends.append(float(tr.positions[-1] - tr.positions[0]))
        Ns.add(tr.horizon)
    if len(Ns) > 1:
        raise ValueError("trajectories have different horizons")
    return np.array(ends), (Ns.pop() if Ns else 0)


def velocity_direct(trajectories, horizon: int | None = None, level: float = 0.95) -> VelocityEstimate:
    """Replica mean of ``X_N / N`` with a Student-t interval.

    Accepts trajectories or an array of endpoint displacements plus ``horizon``.
    """
    ends, N = _endpoints(trajectories, horizon)
    n = ends.shape[0]
    if n < 2:
        raise InsufficientData(f"velocity_direct needs >= 2 replicas, got {n}")
    v = ends / N
    m = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(n))
    q = float(stats.t.ppf(0.5 + level / 2, n - 1))
    return VelocityEstimate(m, m - q * se, m + q * se, se, n, N)


def geometric_grid(N: int, points: int = 12, start: int = 10) -> np.ndarray:
    g = np.unique(np.geomspace(min(start, N), N, points).astype(np.int64))
    return g[g >= 1]


@dataclass
class CLTDiagnostics:
    scaling_exponent: float
    ks_stat: float
    ks_pvalue: float
    grid: np.ndarray
    variances: np.ndarray
    qq: np.ndarray
    degenerate: bool
    sigma_source: str
    sigma2: float


def clt_diagnostics(samples, grid, v: float, sigma2: float | None = None,
                    min_replicas: int = 100) -> CLTDiagnostics:
    """Variance-growth exponent and endpoint normality.

    ``samples[r, j]`` is ``X_{grid[j]} - X_0`` for replica ``r``.  The exponent
    is the log-log slope of ``Var(X_n - n v)``; the KS statistic compares
    ``(X_N - N v) / sqrt(sigma2 N)`` with the standard normal, ``sigma2``
    defaulting to the endpoint sample variance over ``N``.
    """
    S = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=np.int64)
    if S.ndim != 2 or S.shape[1] != grid.size:
        raise ValueError("samples must have one column per grid point")
    R = S.shape[0]
    if R < min_replicas:
        raise InsufficientData(f"clt_diagnostics needs >= {min_replicas} replicas, got {R}")
    centred = S - grid[None, :] * v
    var = centred.var(axis=0, ddof=1)
    N = int(grid[-1])
    source = "renewal" if sigma2 is not None else "endpoint"
    if sigma2 is None:
        sigma2 = float(var[-1] / N)
    if np.all(var <= 1e-300) or sigma2 <= 0:
        nan = float("nan")
        return CLTDiagnostics(nan, nan, nan, grid, var, np.empty((0, 2)), True, source, 0.0)
    ok = var > 0
    expo = float(np.polyfit(np.log(grid[ok]), np.log(var[ok]), 1)[0])
    z = np.sort(centred[:, -1] / math.sqrt(sigma2 * N))
    ks = stats.kstest(z, "norm")
    theo = stats.norm.ppf((np.arange(1, R + 1) - 0.5) / R)
    return CLTDiagnostics(expo, float(ks.statistic), float(ks.pvalue), grid, var,
                          np.column_stack([theo, z]), False, source, float(sigma2))


# ---------------------------------------------------------------------------
# replicas

@dataclass
class ReplicaTask:
    params: ModelParams
    horizon: int
    master_seed: int
    index: int
    grid: np.ndarray
    backend: str = "reservoir-window"
    extent: int | None = None
    renewals: bool = False
    cone_slope: float | None = None
    renewal_horizon: int = 1000
    guard: int | None = None


@dataclass
class ReplicaResult:
    index: int
    seed_env: int
    seed_walker: int
    endpoint: int
    on_grid: np.ndarray
    records: list = field(default_factory=list)
    trajectory: object = None


def run_replica(task: ReplicaTask, keep_trajectory: bool = False) -> ReplicaResult:
    se, sw = replica_seeds(task.master_seed, task.index)
    tr, rec = run_annealed(task.params, task.horizon, se, sw, backend=task.backend,
                           extent=task.extent, record=task.renewals)
    X = tr.positions - tr.positions[0]
    records = []
    if task.renewals:
        slope = task.cone_slope
        if slope is None:
            slope = renewal.ConeParams.from_pilot(X[-1] / task.horizon).slope
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoRenewalFound)
            records = renewal.extract_renewals(tr, rec, renewal.ConeParams(slope),
                                               task.renewal_horizon, task.guard)
    return ReplicaResult(task.index, se, sw, int(X[-1]), X[task.grid].copy(), records,
                         tr if keep_trajectory else None)


def thread_count() -> int:
    env = os.environ.get("SEPWALK_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("SEPWALK_THREADS", f"not an integer: {env!r}")
        return max(1, n)
    return os.cpu_count() or 1


def run_replicas(tasks, threads: int | None = None, keep_trajectory: bool = False):
    """Run tasks serially or in a process pool; results come back in task order."""
    threads = thread_count() if threads is None else threads
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [run_replica(t, keep_trajectory) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(run_replica, tasks, [keep_trajectory] * len(tasks)))


# ---------------------------------------------------------------------------
# summaries and scans

@dataclass
class SummaryStats:
    n_replicas: int
    horizon: int
    gamma: float
    v_direct: float
    v_lo: float
    v_hi: float
    v_renewal: float = float("nan")
    v_renewal_lo: float = float("nan")
    v_renewal_hi: float = float("nan")
    sigma2: float = float("nan")
    n_renewals: int = 0
    ks_stat: float = float("nan")
    ks_pvalue: float = float("nan")
    scaling_exponent: float = float("nan")
    sigma_source: str = ""
    error: str = ""

    def to_dict(self):
        return asdict(self)


def summarize(results, params: ModelParams, horizon: int, grid) -> SummaryStats:
    ends = np.array([r.endpoint for r in results], dtype=float)
    if len(results) >= 2:
        vd = velocity_direct(ends, horizon)
        out = SummaryStats(len(results), horizon, params.gamma, vd.v, vd.lo, vd.hi)
    else:
        nan = float("nan")
        out = SummaryStats(len(results), horizon, params.gamma, float(ends.mean() / horizon), nan, nan)
    moms = []
    for r in results:
        dt, dx = renewal._used(r.records)
        moms.append(Moments.of(np.column_stack([dt, dx]).reshape(-1, 2)))
    if moms:
        m = merge_all(moms)
        out.n_renewals = int(m.n)
        if m.n >= 2:
            est = renewal_from_moments(m)
            out.v_renewal, out.sigma2 = est.v_hat, est.sigma2_hat
            out.v_renewal_lo, out.v_renewal_hi = est.v_ci
    if len(results) >= 100:
        S = np.vstack([r.on_grid for r in results])
        s2 = out.sigma2 if out.n_renewals >= 30 and np.isfinite(out.sigma2) else None
        d = clt_diagnostics(S, grid, out.v_direct, s2)
        out.ks_stat, out.ks_pvalue = d.ks_stat, d.ks_pvalue
        out.scaling_exponent, out.sigma_source = d.scaling_exponent, d.sigma_source
    return out


def ensemble(params: ModelParams, horizon: int, replicas: int, master_seed: int,
             backend: str = "reservoir-window", extent: int | None = None,
             renewals: bool = False, cone_slope: float | None = None,
             renewal_horizon: int = 1000, threads: int | None = None, grid=None,
             keep_trajectory: bool = False):
    """Run ``replicas`` independent walkers and summarise them.

    Returns ``(SummaryStats, results)``.
    """
    grid = geometric_grid(horizon) if grid is None else np.asarray(grid, dtype=np.int64)
    tasks = [ReplicaTask(params, horizon, master_seed, i, grid, backend, extent, renewals,
                         cone_slope, renewal_horizon) for i in range(replicas)]
    results = run_replicas(tasks, threads, keep_trajectory)
    return summarize(results, params, horizon, grid), results


SCAN_COLUMNS = ("gamma", "v_direct", "v_lo", "v_hi", "v_renewal", "sigma2", "n_renewals", "ks_stat")


def gamma_scan(base: ModelParams, gamma_grid, horizon: int, replicas: int, master_seed: int,
               backend: str = "reservoir-window", renewals: bool = False,
               threads: int | None = None, **kw):
    """One :class:`SummaryStats` per gamma; a failing row records its error
    instead of aborting the scan.  Row ``j`` uses master seed ``split(master, j)``."""
    gamma_grid = list(gamma_grid)
    if not gamma_grid:
        raise InsufficientData("gamma grid is empty")
    rows = []
    for j, g in enumerate(gamma_grid):
        p = replace(base, gamma=float(g))
        try:
            s, _ = ensemble(p, horizon, replicas, split_seed(master_seed, j), backend,
                            renewals=renewals, threads=threads, **kw)
        except SepwalkError as exc:
            s = SummaryStats(replicas, horizon, float(g), *([float("nan")] * 3), error=str(exc))
        rows.append(s)
    return rows


def write_scan_csv(path, rows, meta=None):
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(comment_line(meta))
        fh.write(",".join(SCAN_COLUMNS) + "\n")
        for r in rows:
            d = r.to_dict()
            fh.write(",".join(repr(int(d[c])) if c == "n_renewals" else repr(float(d[c]))
                              for c in SCAN_COLUMNS) + "\n")


def read_scan_csv(path):
    with open(path) as fh:
        lines = [ln for ln in skip_comments(fh) if ln.strip()]
    head = lines[0].strip().split(",")
    return [dict(zip(head, (float(v) for v in ln.strip().split(",")))) for ln in lines[1:]]
