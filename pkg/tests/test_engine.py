import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import binom_se
from sepwalk import engine
from sepwalk.errors import BackendError, ConfigError, WindowError
from sepwalk.model import make_params


def P(rho=0.5, gamma=1.0):
    return make_params(0.5, 0.5, rho, gamma)


def test_degenerate_densities():
    assert engine.init_equilibrium(P(1.0), 50).occ.all()
    assert not engine.init_equilibrium(P(0.0), 50).occ.any()


def test_equilibrium_density():
    E = 10**4
    hits = 0
    for s in range(200):
        d = engine.init_equilibrium(P(0.5), E, seed=s).occ.mean()
        hits += abs(d - 0.5) <= 3 * binom_se(0.5, E)
    assert hits >= 195


def test_extent_too_small():
    with pytest.raises(ConfigError):
        engine.init_equilibrium(P(), 2)
    with pytest.raises(ConfigError):
        engine.init_profile(P(), [0, 1, 0], extent=4)
    with pytest.raises(ConfigError):
        engine.init_equilibrium(P(), 10, backend="lattice")


def test_profile_examples():
    env = engine.init_profile(P(), np.zeros(20))
    assert not env.occ.any()
    prof = np.zeros(41, dtype=int)
    prof[20 - 5:20 + 6] = 1
    env = engine.init_profile(P(), prof, origin=-20)
    assert engine.empirical_density(env, 0, 5) == 1.0
    env = engine.init_profile(P(), [0, 1, 0, 1, 0, 1, 0, 1], origin=-4)
    assert engine.empirical_density(env, 0, 3) == pytest.approx(4 / 7)


def test_box_density_examples():
    env = engine.init_profile(P(), np.ones(15))
    assert engine.empirical_density(env, 2, 4) == 1.0
    prof = np.zeros(15)
    prof[7] = 1
    env = engine.init_profile(P(), prof)
    assert engine.empirical_density(env, 0, 1) == pytest.approx(1 / 3)


def test_box_density_equilibrium():
    ok = 0
    for s in range(300):
        env = engine.init_equilibrium(P(0.3), 1201, seed=s)
        ok += abs(engine.empirical_density(env, 0, 500) - 0.3) <= 4 * math.sqrt(0.21 / 1001)
    assert ok >= 297


def test_window_box_error():
    env = engine.init_equilibrium(P(), 21, backend="reservoir-window")
    with pytest.raises(WindowError):
        engine.empirical_density(env, 0, 11)
    with pytest.raises(WindowError):
        engine.occupancy(env, 40)


@pytest.mark.parametrize("backend", engine.BACKENDS)
def test_zero_rate_and_zero_dt(backend):
    env = engine.init_equilibrium(P(0.5, 0.0), 31, backend=backend, seed=1)
    before = env.occ.copy()
    engine.advance(env, 50.0)
    np.testing.assert_array_equal(env.occ, before)
    assert env.sim_time == 50.0
    env = engine.init_equilibrium(P(0.5, 2.0), 31, backend=backend, seed=1)
    mu = env.mu.copy()
    engine.advance(env, 0.0)
    np.testing.assert_array_equal(env.mu, mu)


def test_zero_rate_traces_constant():
    env = engine.init_equilibrium(P(0.5, 0.0), 31, seed=3)
    tr = engine.label_trace(env, [0, 5, 30], [0.0, 1.0, 10.0])
    assert np.all(tr == tr[:, :1])


def test_label_trace_backend_error():
    env = engine.init_equilibrium(P(), 31, backend="reservoir-window")
    with pytest.raises(BackendError):
        engine.label_trace(env, [0], [1.0])
    with pytest.raises(BackendError):
        engine.label_positions(env, [0])


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0), st.lists(st.floats(0.0, 3.0), min_size=1, max_size=5))
def test_torus_invariants(seed, gamma, dts):
    env = engine.init_equilibrium(P(0.4, gamma), 37, seed=seed)
    total = int(env.occ.sum())
    t_prev = 0.0
    for dt in dts:
        engine.advance(env, dt)
        assert int(env.occ.sum()) == total
        np.testing.assert_array_equal(env.xi[env.mu], np.arange(env.extent))
        # types ride with labels
        np.testing.assert_array_equal(env.occ, env.nu[env.mu])
        assert env.sim_time >= t_prev
        t_prev = env.sim_time
        pos = engine.label_positions(env, np.arange(env.extent))
        assert np.unique(pos % env.extent).size == env.extent


def test_distinct_labels_on_trace():
    env = engine.init_equilibrium(P(0.5, 1.0), 41, seed=9)
    tr = engine.label_trace(env, np.arange(41), np.linspace(0, 20, 21))
    for j in range(tr.shape[1]):
        assert np.unique(tr[:, j] % 41).size == 41


@pytest.mark.parametrize("backend", engine.BACKENDS)
def test_stationarity(backend):
    n, E = 1000, 25
    freq = np.zeros(E)
    for s in range(n):
        env = engine.init_equilibrium(P(0.3, 1.5), E, backend=backend, seed=s)
        engine.advance(env, 7.0)
        freq += engine.occupancy_field(env)
    freq /= n
    assert np.all(np.abs(freq - 0.3) <= 4 * binom_se(0.3, n))


def test_determinism():
    a = engine.init_equilibrium(P(0.5, 2.0), 61, seed=42)
    b = engine.init_equilibrium(P(0.5, 2.0), 61, seed=42)
    for dt in (0.5, 3.0, 1.25):
        engine.advance(a, dt)
        engine.advance(b, dt)
    assert engine.snapshot(a).to_line() == engine.snapshot(b).to_line()
    w1 = engine.init_equilibrium(P(0.5, 2.0), 61, backend="reservoir-window", seed=42)
    w2 = engine.init_equilibrium(P(0.5, 2.0), 61, backend="reservoir-window", seed=42)
    engine.advance(w1, 10.0)
    engine.advance(w2, 10.0)
    np.testing.assert_array_equal(w1.occ, w2.occ)


def test_event_count():
    E, g, dt = 1001, 2.0, 50.0
    env = engine.init_equilibrium(P(0.5, g), E, seed=5)
    engine.advance(env, dt)
    expected = g * E * dt
    assert abs(env.n_swaps - expected) <= 4 * math.sqrt(expected)


def test_autocovariance_decay():
    E, n = 400, 1000
    lags = np.array([2.0, 4.0, 8.0, 16.0, 32.0, 64.0])
    cov = np.zeros(lags.size)
    for s in range(n):
        env = engine.init_equilibrium(P(0.5, 1.0), E, seed=s)
        x0 = env.occ.astype(float) - 0.5
        for j, t in enumerate(lags):
            engine.advance(env, t - env.sim_time)
            cov[j] += np.mean(x0 * (env.occ - 0.5))
    cov /= n
    slope = np.polyfit(np.log(lags), np.log(cov), 1)[0]
    assert -0.75 <= slope <= -0.3


def test_label_diffusivity():
    g, t, E, n = 1.0, 1000.0, 401, 1000
    sq = []
    for s in range(n):
        env = engine.init_equilibrium(P(0.05, g), E, seed=s)
        start = engine.label_positions(env, [0, 200])
        engine.advance(env, t)
        sq.extend((engine.label_positions(env, [0, 200]) - start) ** 2)
    assert np.mean(sq) / (2 * g * t) == pytest.approx(1.0, rel=0.1)


def test_snapshot_roundtrip(tmp_path):
    env = engine.init_equilibrium(P(), 33, seed=2)
    engine.advance(env, 1.5)
    snaps = [engine.snapshot(env)]
    engine.advance(env, 2.0)
    snaps.append(engine.snapshot(env))
    p = tmp_path / "snaps.txt"
    engine.write_snapshots(p, snaps)
    back = engine.read_snapshots(p)
    for a, b in zip(snaps, back):
        assert a.time == b.time and a.offset == b.offset
        np.testing.assert_array_equal(a.occupancy, b.occupancy)
