import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from jpolock.dynamics import QuadratureTrace
from jpolock.errors import AmbiguityError, InvalidArgumentError
from jpolock.spectra import (NoiseSpectra, WelchConfig, diagonalize, fluctuations,
                             noise_covariance, phase_noise_psd, read_spectra_csv,
                             rotation_matrices, welch_csd, write_spectra_csv)

FS = 1e6
SMALL = WelchConfig(segment_length=1024)


def white(rng, n, var=1.0):
    return rng.normal(0.0, math.sqrt(var), n)


def test_matches_scipy_csd(rng):
    x, y = white(rng, 50000), white(rng, 50000)
    y = 0.5 * x + y
    for window in ("hann", "rectangular", "blackman"):
        cfg = WelchConfig(1024, 0.5, window)
        ours = welch_csd(x, y, FS, cfg)
        name = "boxcar" if window == "rectangular" else window
        f, ref = signal.csd(x, y, FS, window=name, nperseg=1024, noverlap=512,
                            detrend="constant", scaling="density", average="mean")
        np.testing.assert_allclose(ours.frequencies, f)
        # scipy does not double the Nyquist bin of an even segment; neither do we
        np.testing.assert_allclose(ours.spectrum, ref, rtol=1e-10, atol=1e-18)


def test_direct_periodogram_oracle(rng):
    # one rectangular, non-overlapping segment: plain |FFT|^2 scaling
    x = white(rng, 256)
    cfg = WelchConfig(256, 0.0, "rectangular", "none")
    got = welch_csd(x, x, 1000.0, cfg)
    X = np.array([sum(x[n] * np.exp(-2j * np.pi * k * n / 256) for n in range(256))
                  for k in range(129)])
    ref = np.abs(X) ** 2 / (1000.0 * 256)
    ref[1:-1] *= 2
    np.testing.assert_allclose(got.spectrum.real, ref, rtol=1e-10)
    assert got.warnings  # a single segment is flagged


def test_white_level_and_auto_is_real(rng):
    x = white(rng, 200 * 1024)
    r = welch_csd(x, x, FS, SMALL)
    assert np.all(r.spectrum.imag == 0) and np.all(r.spectrum.real >= 0)
    assert np.mean(r.spectrum.real[1:-1]) == pytest.approx(2e-6, rel=0.05)


def test_sinusoid_power():
    n, L = 1 << 18, 4096
    f0 = 100 * FS / L
    t = np.arange(n) / FS
    x = np.sin(2 * np.pi * f0 * t)
    r = welch_csd(x, x, FS, WelchConfig(L))
    df = FS / L
    assert r.frequencies[np.argmax(r.spectrum.real)] == pytest.approx(f0)
    assert np.sum(r.spectrum.real) * df == pytest.approx(0.5, rel=0.02)


def test_independent_channels_incoherent(rng):
    x, y = white(rng, 400 * 1024), white(rng, 400 * 1024)
    sxy = welch_csd(x, y, FS, SMALL)
    sxx = welch_csd(x, x, FS, SMALL).spectrum.real
    syy = welch_csd(y, y, FS, SMALL).spectrum.real
    band = slice(1, -1)
    coh = np.abs(sxy.spectrum[band]) / np.sqrt(sxx[band] * syy[band])
    assert np.mean(coh) <= 3 / math.sqrt(sxy.n_segments)
    # imaginary part consistent with zero at 95%
    im = sxy.spectrum.imag[band] / np.sqrt(sxx[band] * syy[band])
    se = np.std(im) / math.sqrt(im.size)
    assert abs(np.mean(im)) < 1.96 * se * 1.5


def test_welch_errors(rng):
    with pytest.raises(InvalidArgumentError):
        welch_csd(np.zeros(100), np.zeros(100), FS, WelchConfig(128))
    with pytest.raises(InvalidArgumentError):
        WelchConfig(1000)
    with pytest.raises(InvalidArgumentError):
        WelchConfig(1024, 1.0)
    with pytest.raises(InvalidArgumentError):
        welch_csd(np.zeros(2048), np.zeros(1024), FS, SMALL)


def test_fluctuations():
    tr = QuadratureTrace(1.0, np.full(10, 3.0), np.full(10, -2.0))
    (di, dq), mean = fluctuations(tr)
    assert np.all(di == 0) and np.all(dq == 0) and mean == (3.0, -2.0)


def test_parseval_and_hermiticity(rng):
    n = 200 * 1024
    i = white(rng, n, 2.0) + 1.0
    q = 0.3 * i + white(rng, n)
    tr = QuadratureTrace(FS, i, q)
    sp = noise_covariance(tr, SMALL)
    df = FS / SMALL.segment_length
    (di, _), _ = fluctuations(tr)
    assert np.sum(sp.s_ii) * df == pytest.approx(np.var(di), rel=0.01)
    swap = noise_covariance(QuadratureTrace(FS, q, i), SMALL)
    np.testing.assert_allclose(swap.s_iq, np.conj(sp.s_iq), rtol=0, atol=1e-15 * np.max(sp.s_ii))
    # Cauchy-Schwarz per bin
    assert np.all(np.abs(sp.s_iq) ** 2 <= sp.s_ii * sp.s_qq * (1 + 1e-9))


def test_isotropic_noise(rng):
    n = 300 * 1024
    tr = QuadratureTrace(FS, white(rng, n) + 1.0, white(rng, n))
    sp = diagonalize(noise_covariance(tr, SMALL))
    band = sp.interior()
    se = 1 / math.sqrt(sp.n_segments)
    assert np.mean(sp.s_ii[band]) == pytest.approx(np.mean(sp.s_qq[band]), rel=3 * se)
    assert abs(np.mean(sp.s_iq.real[band])) < 3 * se * np.mean(sp.s_ii[band]) / math.sqrt(band.stop)
    assert np.mean(sp.s_aa[band]) == pytest.approx(np.mean(sp.s_bb[band]), rel=0.1)


def test_already_diagonal_isotropic():
    f = np.linspace(0, 10, 11)
    c = np.full(11, 2.5)
    sp = NoiseSpectra(f, c, c.copy(), np.zeros(11, complex), (1.0, 0.0), 1)
    d = diagonalize(sp)
    np.testing.assert_array_equal(d.s_aa, c)
    np.testing.assert_array_equal(d.s_bb, c)


def rotated_trace(rng, phi0, n=200 * 1024, s1=4.0, s2=0.25):
    # strong noise along phi0, weak along phi0 + pi/2, carrier along the weak axis
    u, v = white(rng, n, s1), white(rng, n, s2)
    c, s = math.cos(phi0), math.sin(phi0)
    carrier = 5.0 * np.array([-s, c])
    return QuadratureTrace(FS, c * u - s * v + carrier[0], s * u + c * v + carrier[1])


@pytest.mark.parametrize("phi0", [-1.2, -0.4, 0.0, 0.3, 1.0, 1.5])
def test_rotation_recovery(rng, phi0):
    sp = diagonalize(noise_covariance(rotated_trace(rng, phi0), SMALL))
    band = sp.interior()
    ang = sp.rotation_angle[band]
    # mod pi distance, as a circular mean of the doubled angle
    mean = 0.5 * np.angle(np.mean(np.exp(2j * ang)))
    err = abs((mean - phi0 + np.pi / 2) % np.pi - np.pi / 2)
    assert math.degrees(err) < 2
    assert np.mean(sp.s_aa[band]) == pytest.approx(2 * 4.0 / FS, rel=0.05)
    g = diagonalize(noise_covariance(rotated_trace(rng, phi0), SMALL), mode="global")
    gerr = abs((g.rotation_angle[0] - phi0 + np.pi / 2) % np.pi - np.pi / 2)
    assert math.degrees(gerr) < 2


def test_trace_orthogonality_reconstruction(rng):
    tr = rotated_trace(rng, 0.7, n=64 * 1024)
    sp = diagonalize(noise_covariance(tr, SMALL))
    np.testing.assert_allclose(sp.s_aa + sp.s_bb, sp.s_ii + sp.s_qq, rtol=1e-12)
    O = rotation_matrices(sp)
    eye = np.einsum("nji,njk->nik", O, O)
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(2), eye.shape), atol=1e-14)
    re = np.stack([np.stack([sp.s_ii, sp.s_iq.real], -1),
                   np.stack([sp.s_iq.real, sp.s_qq], -1)], -2)
    diag = np.zeros_like(re)
    diag[:, 0, 0], diag[:, 1, 1] = sp.s_aa, sp.s_bb
    recon = O @ diag @ np.transpose(O, (0, 2, 1))
    scale = np.max(np.abs(re), axis=(1, 2), keepdims=True)
    assert np.max(np.abs(recon - re) / scale) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(-1, 1), st.floats(-math.pi, math.pi))
def test_diagonalize_properties(a, b, rho, ref):
    c = rho * math.sqrt(a * b)
    f = np.array([0.0, 1.0, 2.0])
    sp = NoiseSpectra(f, np.full(3, a), np.full(3, b), np.full(3, c + 0.1j), (0, 0), 1)
    d = diagonalize(sp, reference_angle=ref)
    assert np.allclose(d.s_aa + d.s_bb, a + b, rtol=1e-12)
    assert np.all(d.s_aa >= 0) and np.all(d.s_bb >= 0)
    assert np.all((-np.pi / 2 <= d.rotation_angle) & (d.rotation_angle < np.pi / 2))
    # phase eigenvector is the one closer to perpendicular of the carrier
    phase_dir = ref + np.pi / 2
    assert abs(math.cos(d.rotation_angle[0] - phase_dir)) >= math.sqrt(0.5) - 1e-12


def test_zero_mean_field_is_ambiguous():
    f = np.array([0.0, 1.0])
    sp = NoiseSpectra(f, np.ones(2), np.ones(2), np.zeros(2, complex), (0.0, 0.0), 1)
    with pytest.raises(AmbiguityError, match="reference_angle"):
        diagonalize(sp)
    diagonalize(sp, reference_angle=0.0)


def test_constant_trace_zero_psd():
    tr = QuadratureTrace(FS, np.full(4096, 1.2), np.zeros(4096))
    f, s = phase_noise_psd(tr, SMALL)
    assert np.all(s == 0)


def test_reduction_order_independent(rng):
    x = white(rng, 300 * 512)
    cfg = WelchConfig(1024)
    ref = welch_csd(x, x, FS, cfg).spectrum.real
    win = cfg.window_array()
    segs = np.lib.stride_tricks.sliding_window_view(x, 1024)[::512]
    per = []
    for s in segs:
        X = np.fft.rfft((s - s.mean()) * win)
        per.append(np.abs(X) ** 2)
    per = np.array(per)
    perm = rng.permutation(len(per))
    alt = np.sum(per[perm], axis=0) / (FS * np.sum(win ** 2) * len(per))
    alt[1:-1] *= 2
    np.testing.assert_allclose(ref, alt, rtol=1e-12)


def test_segment_count_doubling(rng):
    x = white(rng, 400 * 1024)
    a = welch_csd(x[: 200 * 1024], x[: 200 * 1024], FS, SMALL)
    b = welch_csd(x, x, FS, SMALL)
    la, lb = np.mean(a.spectrum.real[1:-1]), np.mean(b.spectrum.real[1:-1])
    assert abs(la - lb) / lb < 1 / math.sqrt(a.n_segments)


def test_csv_round_trip(rng, tmp_path):
    sp = diagonalize(noise_covariance(rotated_trace(rng, 0.2, n=8192), SMALL))
    write_spectra_csv(tmp_path / "s.csv", sp, db_reference=1e-6)
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "freq_hz,s_ii,s_qq,re_s_iq,im_s_iq,s_aa,s_bb,rotation_rad,s_aa_db"
    back = read_spectra_csv(tmp_path / "s.csv")
    for name in ("frequencies", "s_ii", "s_qq", "s_iq", "s_aa", "s_bb", "rotation_angle"):
        np.testing.assert_array_equal(getattr(back, name), getattr(sp, name))


def test_db_output(rng):
    tr = rotated_trace(rng, 0.2, n=8192)
    f, lin = phase_noise_psd(tr, SMALL)
    _, db = phase_noise_psd(tr, SMALL, db_reference=1e-6)
    np.testing.assert_allclose(db[1:], 10 * np.log10(lin[1:] / 1e-6))
