"""Command line entry point.

    sepwalk <simulate|scan|renewal|traps|kernel-check|static> --config PATH [--seed N] [--out DIR]

Each invocation writes into a fresh ``<command>-<timestamp>`` directory below
``--out`` (or ``output.directory``).  Exit status: 0 success, 2 invalid input,
3 failure while running.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
import warnings
from dataclasses import asdict
from importlib import metadata as _md
from pathlib import Path

import numpy as np

from . import estimators, heat, plotting, renewal, static
from .config import ScenarioConfig
from .errors import ConfigError, DomainError, InsufficientData, NoRenewalFound, RangeError
from .model import regime_report
from .output import comment_line, fresh_run_dir, write_json
from .seeds import split_seed
from .walker import sample_static_environment

COMMANDS = ("simulate", "scan", "renewal", "traps", "kernel-check", "static")
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def _version():
    try:
        return _md.version("artifact")
    except _md.PackageNotFoundError:
        return "dev"


class Run:
    """Output directory plus the metadata echoed into every file."""

    def __init__(self, cfg: ScenarioConfig, command: str, parent=None):
        self.cfg = cfg
        self.command = command
        parent = parent or cfg.get_str("output.directory", "sepwalk-runs")
        formats = cfg.get_list("output.formats", str, ["csv", "json", "png"])
        self.figures = "png" in [f.strip().lower() for f in formats]
        self.meta = {"command": command, "config": cfg.echo(), "version": _version()}
        self.dir = fresh_run_dir(parent, command)
        write_json(self.dir / "run.json", dict(self.meta, created=_dt.datetime.now().isoformat()))

    def path(self, name) -> Path:
        return self.dir / name

    def json(self, name, obj):
        write_json(self.path(name), {"metadata": self.meta, **obj})

    def figure(self, fn, name, *args, **kw):
        if self.figures:
            fn(self.path(name), *args, **kw)


def _engine(cfg):
    backend = cfg.get_str("engine.backend", "reservoir-window")
    extent = cfg.get_int("engine.extent", None)
    if extent is not None and extent < 3:
        raise ConfigError("engine.extent", "must be >= 3")
    return backend, extent


def _summary_dict(s):
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in s.to_dict().items()}


# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ScenarioConfig, parent=None) -> Path:
    params = cfg.model_params()
    N = cfg.positive_int("run.horizon")
    R = cfg.positive_int("run.replicas")
    backend, extent = _engine(cfg)
    save = cfg.get_bool("experiment.save_trajectories", True)
    run = Run(cfg, "simulate", parent)
    summary, results = estimators.ensemble(params, N, R, cfg.master_seed(), backend, extent,
                                           keep_trajectory=True)
    if save:
        for r in results:
            tr = r.trajectory
            tr.metadata.update({"replica": r.index, "config": run.meta["config"]})
            tr.to_csv(run.path(f"trajectory_{r.index:04d}.csv"))
    run.json("summary.json", {"summary": _summary_dict(summary),
                              "regime": asdict(regime_report(params)),
                              "seeds": [[r.index, r.seed_env, r.seed_walker] for r in results]})
    shown = [r.trajectory.positions for r in results[:20]]
    run.figure(plotting.trajectories, "trajectories.png", shown, N, summary.v_direct)
    return run.dir


def cmd_scan(cfg: ScenarioConfig, parent=None) -> Path:
    params = cfg.model_params()
    gammas = cfg.get_list("experiment.gammas")
    if not gammas or any(g < 0 for g in gammas):
        raise ConfigError("experiment.gammas", "need a nonempty list of rates >= 0")
    N = cfg.positive_int("run.horizon")
    R = cfg.positive_int("run.replicas", minimum=2)
    backend, extent = _engine(cfg)
    ren = cfg.get_bool("experiment.renewals", False)
    kw = {"extent": extent, "cone_slope": cfg.get_float("experiment.cone_slope", None),
          "renewal_horizon": cfg.positive_int("experiment.forward_horizon", 1000)}
    run = Run(cfg, "scan", parent)
    rows = estimators.gamma_scan(params, gammas, N, R, cfg.master_seed(), backend, ren, **kw)
    estimators.write_scan_csv(run.path("scan.csv"), rows, run.meta)
    run.json("scan.json", {"rows": [_summary_dict(r) for r in rows]})
    run.figure(plotting.scan, "scan.png", rows)
    return run.dir


def cmd_renewal(cfg: ScenarioConfig, parent=None) -> Path:
    params = cfg.model_params()
    N = cfg.positive_int("run.horizon")
    R = cfg.positive_int("run.replicas")
    backend, extent = _engine(cfg)
    fh = cfg.positive_int("experiment.forward_horizon", 1000)
    guard = cfg.positive_int("experiment.guard", fh)
    slope = cfg.get_float("experiment.cone_slope", None)
    if slope is not None and not 0 < slope < 1:
        raise ConfigError("experiment.cone_slope", "must lie in (0, 1)")
    master = cfg.master_seed()
    run = Run(cfg, "renewal", parent)
    grid = estimators.geometric_grid(N)
    tasks = [estimators.ReplicaTask(params, N, master, i, grid, backend, extent, True, slope, fh, guard)
             for i in range(R)]
    results = estimators.run_replicas(tasks)
    per = []
    for r in results:
        renewal.write_renewals_csv(run.path(f"renewals_{r.index:04d}.csv"), r.records,
                                   dict(run.meta, replica=r.index))
        entry = {"replica": r.index, "v_direct": r.endpoint / N,
                 "records": len(r.records),
                 "non_provisional": sum(not x.provisional for x in r.records)}
        try:
            entry["estimate"] = renewal.renewal_estimates(r.records).to_dict()
        except InsufficientData as exc:
            entry["estimate"] = {"error": str(exc)}
        try:
            entry["iid"] = renewal.renewal_iid_tests(r.records, seed=split_seed(master, r.index, 2))
        except InsufficientData as exc:
            entry["iid"] = {"error": str(exc)}
        per.append(entry)
    summary = estimators.summarize(results, params, N, grid)
    dts = np.array([x.dt_prev for r in results for x in r.records if not x.provisional and x.k >= 2])
    run.json("diagnostics.json", {"summary": _summary_dict(summary), "replicas": per,
                                  "cone_slope": slope if slope is not None else "pilot",
                                  "forward_horizon": fh, "guard": guard})
    if dts.size:
        g, s = renewal.tail_survival(dts)
        run.figure(plotting.renewal_tail, "renewal_tail.png", g, s)
    return run.dir


def cmd_traps(cfg: ScenarioConfig, parent=None) -> Path:
    params = cfg.model_params()
    ls = [int(v) for v in cfg.get_list("experiment.l", int)]
    J = cfg.positive_int("experiment.J")
    R = cfg.positive_int("run.replicas")
    span = cfg.get_float("experiment.span", 40.0)
    points = cfg.positive_int("experiment.points", 160, minimum=2)
    backend, extent = _engine(cfg)
    for l in ls:
        if l > 0 and J > l:
            raise ConfigError("experiment.J", f"J={J} exceeds trap half-width l={l}")
    master = cfg.master_seed()
    run = Run(cfg, "traps", parent)
    tabs = []
    for j, l in enumerate(ls):
        times = heat.default_trap_times(l, params.gamma, points, span)
        tab = heat.dissipation_check(l, J, params, R, times, seed=split_seed(master, j),
                                     extent=extent, backend=backend)
        heat.write_prob_csv(run.path(f"traps_l{l}.csv"), tab.times, tab.p_bad, tab.ci_lo, tab.ci_hi,
                            dict(run.meta, l=l, J=J, L_max=tab.L_max))
        tabs.append(tab)
    med = [t.median_first_passage for t in tabs]
    with open(run.path("first_passage.csv"), "w") as fh:
        fh.write(comment_line(run.meta))
        fh.write("l,median_first_passage,never_good\n")
        for t, m in zip(tabs, med):
            fh.write(f"{t.l},{m!r},{int(np.sum(~np.isfinite(t.first_passage)))}\n")
    good = [(t.l, m) for t, m in zip(tabs, med) if t.l > 0 and np.isfinite(m)]
    slope = heat.first_passage_exponent(*zip(*good)) if len(good) >= 2 else None
    run.json("traps.json", {"l": ls, "J": J, "median_first_passage": med, "exponent": slope})
    run.figure(plotting.dissipation, "dissipation.png", tabs)
    if slope is not None:
        run.figure(plotting.first_passage, "first_passage.png", *zip(*good), slope)
    return run.dir


def cmd_kernel_check(cfg: ScenarioConfig, parent=None) -> Path:
    params = cfg.model_params()
    times = cfg.get_list("experiment.times", float, [1.0])
    if any(t < 0 for t in times):
        raise ConfigError("experiment.times", "times must be >= 0")
    Ls = [int(v) for v in cfg.get_list("experiment.L", int, [])]
    run = Run(cfg, "kernel-check", parent)
    report = {"kernels": []}
    first = None
    for t in times:
        tab = heat.kernel_table(params.gamma, t)
        first = first or tab
        heat.write_kernel_csv(run.path(f"kernel_t{t:g}.csv"), tab, dict(run.meta, t=t))
        report["kernels"].append({"t": t, "radius": int(tab.sites[-1]),
                                  "truncation_eps": tab.truncation_eps})
    ctabs = []
    if Ls:
        R = cfg.positive_int("run.replicas", minimum=1000)
        a = np.linspace(0.0, cfg.get_float("experiment.a_max", 0.03),
                        cfg.positive_int("experiment.a_points", 61, minimum=2))
        t_conc = cfg.get_float("experiment.t", None)
        for j, L in enumerate(Ls):
            try:
                ct = heat.concentration_check(params, L, a, R, t_conc, seed=split_seed(cfg.master_seed(), j))
            except InsufficientData as exc:
                raise InsufficientData(f"L={L}: {exc}") from None
            heat.write_concentration_csv(run.path(f"concentration_L{L}.csv"), ct, dict(run.meta, L=L, t=ct.t))
            report.setdefault("concentration", []).append({"L": L, "t": ct.t, "c_hat": ct.c_hat})
            ctabs.append(ct)
    run.json("kernel_check.json", report)
    run.figure(plotting.kernel, "kernel.png", first)
    if ctabs:
        run.figure(plotting.concentration, "concentration.png", ctabs)
    return run.dir


def cmd_static(cfg: ScenarioConfig, parent=None) -> Path:
    params = cfg.model_params()
    depths = [int(v) for v in cfg.get_list("experiment.depths", int, list(range(1, 51)))]
    if not depths or min(depths) < 1:
        raise ConfigError("experiment.depths", "depths must be >= 1")
    env_path = cfg.get_str("experiment.environment", None)
    master = cfg.master_seed()
    if env_path:
        omega = static.read_environment(env_path)
    else:
        omega = sample_static_environment(params, 2 * max(depths) + 3, split_seed(master, 0))
    if omega.size < 2 * max(depths) + 3:
        raise ConfigError("experiment.environment", "environment shorter than 2*max(depth)+3 sites")
    run = Run(cfg, "static", parent)
    pot = static.potential(omega)
    rows = [(a, static.exit_left_prob(pot, a), static.exit_prob_oracle(omega, a, 1)) for a in depths]
    static.write_exit_table(run.path("exit_probs.csv"), rows, run.meta)
    static.write_environment(run.path("environment.txt"), omega, run.meta)
    cls = static.static_classify(params)
    out = {"classification": cls.label, "transience_lhs": cls.transience_lhs,
           "jensen_lhs": cls.jensen_lhs, "boundary": cls.boundary,
           "regime": asdict(regime_report(params)),
           "bracket": asdict(static.excursion_bracket(pot, pot.lo, pot.hi)),
           "max_abs_diff": max(abs(f - o) for _, f, o in rows)}
    n_exp = cfg.get_int("experiment.exponent_horizon", 0)
    if n_exp > 0:
        grid = np.unique(np.geomspace(max(10, n_exp // 100), n_exp, 8).astype(int))
        med, exps = static.subballistic_exponent(params, n_exp, grid, split_seed(master, 1),
                                                 cfg.positive_int("run.replicas", 1))
        out["path_exponent"] = {"median": med, "per_walk": exps.tolist()}
    run.json("classification.json", out)
    run.figure(plotting.exit_probs, "exit_probs.png", [r[0] for r in rows],
               [r[1] for r in rows], [r[2] for r in rows])
    return run.dir


HANDLERS = {"simulate": cmd_simulate, "scan": cmd_scan, "renewal": cmd_renewal,
            "traps": cmd_traps, "kernel-check": cmd_kernel_check, "static": cmd_static}


def build_parser():
    p = argparse.ArgumentParser(prog="sepwalk", description="Random walk driven by an exclusion process.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="flat dotted key = value file")
    p.add_argument("--seed", type=int, help="overrides run.master_seed")
    p.add_argument("--out", help="parent directory for the run (overrides output.directory)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ScenarioConfig.from_file(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "seed must be >= 0")
            cfg.overrides["run.master_seed"] = str(args.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoRenewalFound)
            out = HANDLERS[args.command](cfg, args.out)
    except (ConfigError, RangeError, DomainError) as exc:
        print(f"sepwalk: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any failure after validation maps to one status
        print(f"sepwalk: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
