"""Figures written next to the CSV tables.  Uses the non-interactive Agg
backend; every function saves one file and closes its figure."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.6, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def trajectories(path, paths, horizon, v=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for X in paths:
            ax.plot(np.arange(len(X)), X, lw=0.7, alpha=0.7)
        if v is not None:
            ax.plot([0, horizon], [0, v * horizon], "k--", lw=1, label=f"v = {v:.4f}")
            ax.legend()
        ax.set_xlabel("step n")
        ax.set_ylabel("X_n")
        return _save(fig, path)


def scan(path, rows):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        g = np.array([r.gamma for r in rows])
        v = np.array([r.v_direct for r in rows])
        lo = np.array([r.v_lo for r in rows])
        hi = np.array([r.v_hi for r in rows])
        ax.errorbar(g, v, yerr=[v - lo, hi - v], fmt="o-", ms=3, capsize=2, label="direct")
        vr = np.array([r.v_renewal for r in rows])
        if np.any(np.isfinite(vr)):
            ax.plot(g, vr, "s", ms=3, label="renewal")
        ax.axhline(0, color="k", lw=0.6)
        if np.all(g > 0):
            ax.set_xscale("log")
        ax.set_xlabel("gamma")
        ax.set_ylabel("velocity")
        ax.legend()
        return _save(fig, path)


def dissipation(path, tables):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for tab in tables:
            ax.plot(tab.scaled_times, tab.p_bad, lw=1, label=f"l = {tab.l}")
            ax.fill_between(tab.scaled_times, tab.ci_lo, tab.ci_hi, alpha=0.2)
        ax.set_xscale("log")
        ax.set_xlabel("gamma t / l^2")
        ax.set_ylabel("P(0 not good)")
        ax.legend()
        return _save(fig, path)


def first_passage(path, ls, medians, slope):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(ls, medians, "o-", label=f"slope {slope:.2f}")
        ax.set_xlabel("trap half-width l")
        ax.set_ylabel("median first time good")
        ax.legend()
        return _save(fig, path)


def kernel(path, table, mean=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(table.sites, table.values, lw=1, label=f"p(t, x), gamma t = {table.gamma * table.t:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("probability")
        ax.legend()
        return _save(fig, path)


def concentration(path, tables):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for tab in tables:
            f = np.where(tab.freq > 0, tab.freq, np.nan)
            ax.semilogy(tab.a_grid ** 2 * tab.L, f, "o-", ms=2, label=f"L = {tab.L}, c = {tab.c_hat:.3g}")
        ax.set_xlabel("a^2 L")
        ax.set_ylabel("exceedance frequency")
        ax.legend()
        return _save(fig, path)


def renewal_tail(path, grid, surv):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        keep = (surv > 0) & (grid > 0)
        ax.loglog(grid[keep], surv[keep], ".", ms=3, label="P(dt > n)")
        if keep.any():
            g = grid[keep].astype(float)
            ax.loglog(g, surv[keep][0] * (g / g[0]) ** -3.0, "k--", lw=0.8, label="n^-3 guide")
        ax.set_xlabel("n")
        ax.legend()
        return _save(fig, path)


def exit_probs(path, depths, formula, oracle):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(depths, formula, "o", ms=3, label="potential sum")
        ax.semilogy(depths, oracle, "x", ms=4, label="linear solve")
        ax.set_xlabel("depth a")
        ax.set_ylabel("P(T_-a < T_1)")
        ax.legend()
        return _save(fig, path)
