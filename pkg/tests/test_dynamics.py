import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jpolock.dynamics import (LabelConfig, QuadratureTrace, SimulationConfig, derive_seed,
                              histogram, kramers_scan, label_states, simulate_trace,
                              step_size, telegraph_reference)
from jpolock.errors import AliasingError, InstabilityError, InvalidArgumentError
from jpolock.potential import (DriveConfig, PhasePoint, ResonatorParams, barrier_height,
                               potential_value)

P = ResonatorParams.scaled()
QS = math.sqrt(2)


def schmitt_reference(proj, lower, upper):
    """Single-pass hysteresis labeller, written independently of the package."""
    state = 0 if proj[0] >= 0 else 1
    out = np.empty(proj.size, dtype=int)
    for k, v in enumerate(proj):
        if state == 1 and v >= upper:
            state = 0
        elif state == 0 and v <= lower:
            state = 1
        out[k] = state
    return out


def test_noiseless_well_is_fixed_point():
    d = DriveConfig(1.0)
    tr = simulate_trace(P, d, SimulationConfig(0.2, 1e5, 0.0, initial_point="well0"))
    assert np.max(np.abs(tr.i_samples - QS)) < 1e-9
    assert np.max(np.abs(tr.q_samples)) < 1e-9


def test_noiseless_release_from_saddle():
    d = DriveConfig(1.0)
    start = PhasePoint(1e-3 * QS, 0.0)
    tr = simulate_trace(P, d, SimulationConfig(0.05, 1e5, 0.0, initial_point=start))
    assert tr.i_samples[-1] == pytest.approx(QS, abs=1e-6)
    # energy never rises along the noiseless flow
    u = potential_value(P, d, (tr.i_samples, tr.q_samples))
    assert np.all(np.diff(u) <= 1e-9 * np.maximum(np.abs(u[1:]), 1e-12))


def test_gradient_descent_oracle():
    # tiny-step explicit descent, independent of the chunked kernel
    d = DriveConfig(1.3, 0.02, 0.7)
    start = np.array([0.3, -0.4])
    tr = simulate_trace(P, d, SimulationConfig(4e-5, 1e6, 0.0, initial_point=start))
    q = start.copy()
    h = 1e-4
    for _ in range(int(40 / h)):
        r2 = q @ q
        a = P.kappa_tot * math.sqrt(1.3) / 2
        s = math.sqrt(P.kappa_ext) * 0.02
        g = np.array([-a * q[0] + 4 * (-3 * P.gamma) * r2 * q[0] - s * math.sin(0.7),
                      a * q[1] + 4 * (-3 * P.gamma) * r2 * q[1] + s * math.cos(0.7)])
        q -= h * g
    np.testing.assert_allclose([tr.i_samples[-1], tr.q_samples[-1]], q, atol=1e-4)


def test_determinism_and_seed_dependence():
    d = DriveConfig(1.0)
    sim = SimulationConfig(0.02, 1e6, 0.2, seed=7)
    a = simulate_trace(P, d, sim)
    b = simulate_trace(P, d, sim)
    np.testing.assert_array_equal(a.i_samples, b.i_samples)
    np.testing.assert_array_equal(a.q_samples, b.q_samples)
    c = simulate_trace(P, d, replace(sim, seed=8))
    assert not np.array_equal(a.i_samples, c.i_samples)


def test_first_sample_is_start_and_metadata():
    tr = simulate_trace(P, DriveConfig(1.0), SimulationConfig(1e-3, 1e6, 0.1, seed=3))
    assert tr.i_samples[0] == pytest.approx(QS)
    assert tr.metadata["seed"] == 3
    assert len(tr) == 1000
    assert tr.metadata["steps_per_sample"] >= 1


def test_step_size_rule():
    h, n = step_size(P, DriveConfig(1.0), SimulationConfig(1.0, 1e6))
    # well curvature 2a = 4 in scaled units
    assert h <= 0.05 / 4 + 1e-15
    assert h * n == pytest.approx(1.0)
    h2, n2 = step_size(P, DriveConfig(1.0), SimulationConfig(1.0, 1e6, dt=0.25e-6))
    assert (h2, n2) == (0.25, 4)


def test_instability_error():
    with pytest.raises(InstabilityError, match="reduce dt"):
        simulate_trace(P, DriveConfig(1.0), SimulationConfig(1e-3, 1e6, 50.0, seed=1))


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        SimulationConfig(duration=2.5e-6, sample_rate=1e6)
    with pytest.raises(InvalidArgumentError):
        SimulationConfig(1.0, 1e6, dt=2e-6)
    with pytest.raises(InvalidArgumentError):
        SimulationConfig(1.0, 1e6, -1.0)
    with pytest.raises(InvalidArgumentError):
        SimulationConfig(1.0, 1e6, initial_point="nowhere")
    with pytest.raises(InvalidArgumentError):
        LabelConfig(0.1, 0.5)


def test_constant_trace_labels_and_histogram():
    tr = QuadratureTrace(1e3, np.full(500, QS), np.zeros(500))
    st_ = label_states(tr, LabelConfig.symmetric(QS))
    assert st_.occupation == (1.0, 0.0)
    assert st_.switch_count == 0
    h = histogram(tr, "I", 10)
    assert np.count_nonzero(h.counts) == 1 and h.counts.sum() == 500


def test_square_wave():
    fs = 1e6
    i = np.where((np.arange(int(fs)) // 1000) % 2 == 0, QS, -QS)
    tr = QuadratureTrace(fs, i, np.zeros_like(i))
    s = label_states(tr, LabelConfig.symmetric(QS))
    assert s.switch_count == 999
    np.testing.assert_allclose(s.dwell_times, 1e-3, rtol=1e-9)
    assert s.switching_rate == pytest.approx(999.0)
    assert s.occupation == (0.5, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 0.9))
def test_labels_match_single_pass_checker(seed, frac):
    r = np.random.default_rng(seed)
    proj = np.cumsum(r.normal(0, 0.3, 2000))
    proj = 2 * proj / max(np.max(np.abs(proj)), 1e-9)
    tr = QuadratureTrace(1.0, proj, np.zeros_like(proj))
    rule = LabelConfig.symmetric(1.0, frac)
    got = label_states(tr, rule)
    ref = schmitt_reference(proj, rule.lower, rule.upper)
    np.testing.assert_array_equal(got.labels, ref)
    assert got.switch_count == np.count_nonzero(np.diff(ref))
    assert sum(got.occupation) == pytest.approx(1.0)
    assert got.dwell_times.sum() == pytest.approx(tr.duration)


def test_projection_axis():
    tr = QuadratureTrace(1.0, np.zeros(4), np.array([1.0, -1.0, 1.0, -1.0]))
    s = label_states(tr, LabelConfig(-0.5, 0.5, axis_angle=math.pi / 2))
    assert s.switch_count == 3
    h = histogram(tr, "projection", 2, axis_angle=math.pi / 2)
    assert list(h.counts) == [2, 2]


def test_telegraph_dwell_and_autocorrelation():
    rate, amp, fs = 200.0, 0.7, 1e5
    tr = telegraph_reference(rate, amp, fs, 60.0, seed=11)
    s = label_states(tr, LabelConfig.symmetric(amp))
    inner = s.dwell_times[1:-1]
    assert inner.size > 1e4
    assert inner.mean() == pytest.approx(1 / rate, rel=0.03)
    x = tr.i_samples
    for tau in (0.5 / rate, 1 / rate, 2 / rate):
        lag = int(round(tau * fs))
        acf = np.mean(x[:-lag] * x[lag:])
        expect = amp ** 2 * math.exp(-2 * rate * lag / fs)
        assert acf == pytest.approx(expect, abs=0.05 * amp ** 2)
    assert np.all(tr.q_samples == 0)


def test_telegraph_edge_cases():
    z = telegraph_reference(100.0, 0.0, 1e4, 1.0, seed=1)
    assert np.all(z.i_samples == 0)
    with pytest.raises(AliasingError):
        telegraph_reference(1e3, 1.0, 1e4, 1.0, seed=1)
    a = telegraph_reference(100.0, 1.0, 1e4, 1.0, seed=5)
    b = telegraph_reference(100.0, 1.0, 1e4, 1.0, seed=5)
    np.testing.assert_array_equal(a.i_samples, b.i_samples)


def test_derive_seed():
    seeds = {derive_seed(42, k) for k in range(100)}
    assert len(seeds) == 100
    assert derive_seed(42, 3) == derive_seed(42, 3)
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_scan_entry_matches_standalone():
    sim = SimulationConfig(0.05, 1e6, 0.18, seed=99, initial_point="deepest")
    d = DriveConfig(1.0, 0.0, -math.pi / 2)
    scan = kramers_scan(P, d, [0.0, 0.6], sim)
    solo = label_states(simulate_trace(P, d, replace(sim, seed=derive_seed(99, 0))),
                        LabelConfig.for_potential(P, d))
    assert scan[0].switching_rate == solo.switching_rate
    assert scan[0].error is None and scan[1].switch_count == 0


def test_scan_records_failures():
    sim = SimulationConfig(1e-3, 1e6, 50.0, seed=1)
    scan = kramers_scan(P, DriveConfig(1.0), [0.0], sim)
    assert scan[0].switching_rate is None and "Instability" in scan[0].error


@pytest.mark.slow
def test_arrhenius_law():
    # log rate linear in barrier/D over a pump sweep at fixed D
    D = 0.2
    pumps = [1.0, 1.1, 1.2, 1.3]
    x, y = [], []
    for k, r in enumerate(pumps):
        d = DriveConfig(r)
        tr = simulate_trace(P, d, SimulationConfig(1.0, 1e6, D, seed=derive_seed(5, k)))
        s = label_states(tr, LabelConfig.for_potential(P, d))
        assert s.switch_count > 100
        x.append(barrier_height(P, d) / D)
        y.append(math.log(s.switching_rate))
    slope, icpt = np.polyfit(x, y, 1)
    resid = np.array(y) - (slope * np.array(x) + icpt)
    r2 = 1 - resid.var() / np.var(y)
    assert r2 > 0.9
    assert slope < 0


@pytest.mark.slow
def test_step_halving_converged():
    d = DriveConfig(1.0)
    rule = LabelConfig.for_potential(P, d)
    rates = []
    for dt in (None, 0.5 * 0.05 / 4 * 1e-6):
        sim = SimulationConfig(1.0, 1e6, 0.18, seed=17, dt=dt)
        rates.append(label_states(simulate_trace(P, d, sim), rule).switching_rate)
    assert abs(rates[1] - rates[0]) / rates[0] < 0.1
