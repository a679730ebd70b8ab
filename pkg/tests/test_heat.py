import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import bessel_kernel_mp, heat_rk4
from sepwalk import engine
from sepwalk.errors import ConfigError, DomainError, InsufficientData
from sepwalk.heat import (SPECTRAL_CROSSOVER, box_kernels, concentration_check, dissipation_check,
                          fit_tail_rate, heat_kernel, kernel_table, mean_evolution, support_radius,
                          wilson_interval)
from sepwalk.model import make_params
from sepwalk.renewal import good_prefix_check
from sepwalk.model import epsilon

gammas = st.floats(min_value=0.05, max_value=20.0)
times = st.floats(min_value=0.0, max_value=50.0)


def test_initial_condition():
    assert heat_kernel(3.0, 0.0, 0) == 1.0
    assert heat_kernel(3.0, 0.0, 5) == 0.0
    assert heat_kernel(0.0, 7.0, 0) == 1.0


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        heat_kernel(1.0, -0.1, 0)


def test_unit_value_against_ode():
    ref = heat_rk4(1.0, 1.0, 5, dt=1e-3)
    assert heat_kernel(1.0, 1.0, 0) == pytest.approx(ref[5], abs=1e-8)
    assert heat_kernel(1.0, 1.0, 0) == pytest.approx(0.3085083, abs=5e-8)
    got = heat_kernel(1.0, 1.0, np.arange(-5, 6))
    np.testing.assert_allclose(got, ref, atol=1e-8)


@pytest.mark.parametrize("gamma,t", [(0.5, 3.0), (2.0, 2.5), (20.0, 0.7)])
def test_kernel_against_ode(gamma, t):
    ref = heat_rk4(gamma, t, 25)
    np.testing.assert_allclose(heat_kernel(gamma, t, np.arange(-25, 26)), ref, atol=1e-8)


@pytest.mark.parametrize("s,x", [(1.0, 0), (50.0, 7), (900.0, 40), (9000.0, 150)])
def test_kernel_relative_accuracy(s, x):
    assert heat_kernel(1.0, s, x) == pytest.approx(bessel_kernel_mp(1.0, s, x), rel=1e-12)


def test_spectral_branch_continuity():
    lo = SPECTRAL_CROSSOVER * (1 - 1e-9)
    hi = SPECTRAL_CROSSOVER * (1 + 1e-9)
    for x in (0, 30, 120):
        a, b = heat_kernel(1.0, lo, x), heat_kernel(1.0, hi, x)
        assert a == pytest.approx(b, rel=1e-8)
        assert b == pytest.approx(bessel_kernel_mp(1.0, hi, x), rel=1e-9)


@given(gammas, times, st.integers(-60, 60))
def test_symmetry(g, t, x):
    assert heat_kernel(g, t, x) == heat_kernel(g, t, -x)


@given(gammas, times)
def test_kernel_table_mass(g, t):
    tab = kernel_table(g, t)
    total = tab.values.sum()
    assert abs(total - 1.0) <= 1e-10
    assert 1.0 - tab.truncation_eps - 1e-12 <= total <= 1.0 + 1e-12
    assert np.all(tab.values >= 0)
    np.testing.assert_array_equal(tab.values, tab.values[::-1])


@given(st.floats(0.1, 5.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_semigroup(g, s, t):
    r = support_radius(g, s + t)
    a = heat_kernel(g, s, np.arange(-r, r + 1))
    b = heat_kernel(g, t, np.arange(-r, r + 1))
    conv = np.convolve(a, b)[r:3 * r + 1]
    np.testing.assert_allclose(conv, heat_kernel(g, s + t, np.arange(-r, r + 1)), atol=1e-8)


def test_box_kernel_examples():
    assert box_kernels(1.3, 2.0, 4, 0) == (pytest.approx(heat_kernel(1.3, 2.0, 4)),) * 2
    bold, pl = box_kernels(1.0, 0.0, 0, 3)
    assert bold == 1.0
    assert pl == pytest.approx(1 / 7)


@given(st.floats(0.1, 5.0), st.floats(0.0, 10.0), st.integers(0, 12))
def test_box_kernel_mass(g, t, L):
    r = support_radius(g, t) + L
    _, pl = box_kernels(g, t, np.arange(-r, r + 1), L)
    assert pl.sum() == pytest.approx(1.0, abs=1e-10)


@given(st.floats(0.1, 3.0), st.floats(0.01, 20.0), st.integers(0, 15))
def test_unimodal_smoothing(g, t, M):
    # box indicator evolved by the kernel stays symmetric and unimodal
    prof = np.zeros(2 * M + 1 + 2 * 80)
    c = prof.size // 2
    prof[c - M:c + M + 1] = 1.0
    v = mean_evolution(prof, g, t).values
    np.testing.assert_allclose(v, v[::-1], atol=1e-14)
    right = v[c:]
    assert np.all(np.diff(right) <= 1e-14)


def test_mean_evolution_trivial():
    prof = np.zeros(201)
    prof[100] = 1
    me = mean_evolution(prof, 1.5, 3.0)
    np.testing.assert_allclose(me.values, heat_kernel(1.5, 3.0, np.arange(-100, 101)), atol=1e-15)
    assert me.truncation_error <= 1e-10
    ones = mean_evolution(np.ones(50), 2.0, 10.0, padding=1.0)
    np.testing.assert_allclose(ones.values, 1.0)
    z = mean_evolution(np.array([0, 1, 1, 0]), 1.0, 0.0)
    np.testing.assert_array_equal(z.values, [0, 1, 1, 0])


@given(st.lists(st.integers(0, 1), min_size=5, max_size=60), st.floats(0.01, 30.0),
       st.integers(0, 8), st.integers(-10, 10))
def test_short_time_box_bound(bits, t, L, x):
    pad = 120
    prof = np.concatenate([np.zeros(pad), bits, np.zeros(pad)])
    c = pad
    me = mean_evolution(prof, 1.0, t).values
    lhs = me[c + x - L:c + x + L + 1].mean()
    cs = np.concatenate([[0.0], np.cumsum(prof)])
    best = 0.0
    for y in range(x - L, x + L + 1):
        for r in range(L, pad - abs(y) - 1):
            a, b = c + y - r, c + y + r + 1
            best = max(best, (cs[b] - cs[a]) / (2 * r + 1))
    assert lhs <= best + 1e-12


def test_mean_evolution_matches_replicas():
    # SEP averages over replicas solve the lattice heat equation
    params = make_params(0.5, 0.5, 0.5, 1.0)
    rng = np.random.default_rng(11)
    E = 121
    prof = np.zeros(E, dtype=np.int8)
    prof[40:81] = rng.random(41) < 0.5
    t = 4.0
    n = 20000
    acc = np.zeros(E)
    for i in range(n):
        env = engine.init_profile(params, prof, "torus", seed=1000 + i, origin=-60)
        engine.advance(env, t)
        acc += env.occ
    emp = acc / n
    mean = mean_evolution(prof, 1.0, t).values
    bulk = slice(30, 91)
    se = np.sqrt(np.clip(mean * (1 - mean), 1e-4, None) / n)
    z = np.abs(emp[bulk] - mean[bulk]) / se[bulk]
    assert np.all(z < 4.0), z.max()


def test_fit_tail_rate_recovers_rate():
    a = np.linspace(0.01, 0.2, 20)
    L = 50
    f = np.exp(-3.0 * a ** 2 * L)
    c, pts, mask = fit_tail_rate(a, f, L)
    assert c == pytest.approx(3.0, rel=1e-12)
    assert mask.any()


def test_fit_tail_rate_empty_window():
    with pytest.raises(InsufficientData):
        fit_tail_rate([0.1, 0.2], [0.5, 0.4], 10)


def test_concentration_needs_replicas():
    with pytest.raises(ConfigError):
        concentration_check(make_params(0.5, 0.5, 0.5, 1.0), 20, [0.1], replicas=999)


def test_concentration_examples():
    params = make_params(0.5, 0.5, 0.5, 1.0)
    tab = concentration_check(params, 100, [0.0, 0.01, 0.02, 0.03, 1.0001], replicas=1000,
                              seed=3)
    assert tab.freq[-1] == 0.0
    # sign of the deviation is symmetric at equilibrium
    assert abs(tab.freq[0] - 0.5) < 4 * math.sqrt(0.25 / 1000)
    assert tab.c_hat > 0.5


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(np.array([0, 5, 50]), 50)
    p = np.array([0, 5, 50]) / 50
    assert np.all(lo <= p) and np.all(p <= hi)
    assert lo[0] == 0.0 and hi[-1] == 1.0


def test_dissipation_errors():
    params = make_params(0.5, 0.5, 0.5, 1.0)
    with pytest.raises(ConfigError):
        dissipation_check(4, 8, params, replicas=2)
    with pytest.raises(ConfigError):
        dissipation_check(4, 2, params, replicas=2, extent=41)


def test_dissipation_no_trap_matches_equilibrium():
    params = make_params(0.5, 0.5, 0.5, 1.0)
    J, n = 8, 400
    tab = dissipation_check(0, J, params, replicas=n, times=[0.0], seed=5)
    E = 20 * J + 1
    half = E // 2
    rng = np.random.default_rng(99)
    thr = (1 + epsilon(J)) * 0.5
    ref = np.mean([not good_prefix_check((rng.random(E) < 0.5).astype(np.int8), half, J,
                                         half - 1, thr) for _ in range(4000)])
    assert tab.ci_lo[0] - 0.01 <= ref <= tab.ci_hi[0] + 0.01


def test_dissipation_doubling_ratio():
    params = make_params(0.5, 0.5, 0.5, 1.0)
    meds = []
    for l in (8, 16):
        tab = dissipation_check(l, 4, params, replicas=60, seed=l,
                                times=np.geomspace(l * l / 100, 12 * l * l, 100))
        meds.append(tab.median_first_passage)
    assert 2.5 <= meds[1] / meds[0] <= 6.0
