"""Welch cross-spectral estimation and the phase/amplitude noise split.

For a two-channel record the per-frequency covariance

    S(nu) = [[S_II, S_IQ], [S_IQ*, S_QQ]]

is estimated with Welch's method, and its real part is diagonalised by an
orthogonal rotation O(nu):  O^T Re S O = diag(S_aa, S_bb).  S_aa is the
phase quadrature, i.e. the eigen-direction closest to perpendicular to the
carrier.  By default the carrier is the mean field (I_mean, Q_mean); callers
may pass an explicit ``reference_angle`` instead.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import get_window

from .dynamics import QuadratureTrace
from .errors import AmbiguityError, InvalidArgumentError

WINDOWS = ("hann", "rectangular", "blackman")
CSV_COLUMNS = ["freq_hz", "s_ii", "s_qq", "re_s_iq", "im_s_iq", "s_aa", "s_bb", "rotation_rad"]
# segments per FFT batch; only bounds memory, the sum order is fixed
_BATCH = 32


@dataclass(frozen=True)
class WelchConfig:
    segment_length: int = 1 << 16
    overlap_fraction: float = 0.5
    window: str = "hann"
    detrend: str = "mean"

    def __post_init__(self):
        n = int(self.segment_length)
        if n < 8 or n & (n - 1):
            raise InvalidArgumentError("segment_length must be a power of two >= 8")
        if not 0 <= self.overlap_fraction < 1:
            raise InvalidArgumentError("overlap_fraction must lie in [0, 1)")
        if self.window not in WINDOWS:
            raise InvalidArgumentError(f"window must be one of {WINDOWS}")
        if self.detrend not in ("mean", "none"):
            raise InvalidArgumentError("detrend must be 'mean' or 'none'")

    @property
    def step(self) -> int:
        return self.segment_length - int(round(self.overlap_fraction * self.segment_length))

    def window_array(self) -> np.ndarray:
        name = "boxcar" if self.window == "rectangular" else self.window
        return get_window(name, self.segment_length)

    def n_segments(self, n_samples: int) -> int:
        if n_samples < self.segment_length:
            return 0
        return 1 + (n_samples - self.segment_length) // self.step


@dataclass(frozen=True)
class WelchResult:
    frequencies: np.ndarray
    spectrum: np.ndarray
    n_segments: int
    warnings: tuple = ()


@dataclass(frozen=True)
class NoiseSpectra:
    frequencies: np.ndarray
    s_ii: np.ndarray
    s_qq: np.ndarray
    s_iq: np.ndarray
    mean_field: tuple
    n_segments: int
    s_aa: np.ndarray | None = None
    s_bb: np.ndarray | None = None
    rotation_angle: np.ndarray | None = None
    warnings: tuple = ()

    def interior(self) -> slice:
        """Bins excluding DC and Nyquist."""
        return slice(1, self.frequencies.size - 1)


def fluctuations(trace: QuadratureTrace):
    """Return ((dI, dQ), (I_mean, Q_mean)) with full-record means removed."""
    i_mean = float(np.mean(trace.i_samples))
    q_mean = float(np.mean(trace.q_samples))
    return (trace.i_samples - i_mean, trace.q_samples - q_mean), (i_mean, q_mean)


def _check(cfg: WelchConfig, n: int, fs: float):
    if not fs > 0:
        raise InvalidArgumentError("sampling rate must be > 0")
    if cfg.segment_length > n:
        raise InvalidArgumentError(
            f"segment_length {cfg.segment_length} exceeds series length {n}")
    nseg = cfg.n_segments(n)
    warn = ("fewer than 2 segments: estimate variance is high",) if nseg < 2 else ()
    return nseg, warn


def _welch_products(channels, fs, cfg: WelchConfig, pairs):
    """Averaged, density-scaled one-sided conj(X_a) X_b for each (a, b) in ``pairs``."""
    n = channels[0].size
    nseg, warn = _check(cfg, n, fs)
    L = cfg.segment_length
    win = cfg.window_array()
    scale = 1.0 / (fs * np.sum(win * win) * nseg)
    views = [np.lib.stride_tricks.sliding_window_view(c, L)[:: cfg.step][:nseg] for c in channels]
    acc = [np.zeros(L // 2 + 1, dtype=complex) for _ in pairs]
    for start in range(0, nseg, _BATCH):
        ffts = []
        for v in views:
            seg = np.array(v[start:start + _BATCH], dtype=float)
            if cfg.detrend == "mean":
                seg -= seg.mean(axis=1, keepdims=True)
            ffts.append(np.fft.rfft(seg * win, axis=1))
        for k, (a, b) in enumerate(pairs):
            if a == b:
                acc[k] += np.sum(ffts[a].real ** 2 + ffts[a].imag ** 2, axis=0)
            else:
                acc[k] += np.sum(np.conj(ffts[a]) * ffts[b], axis=0)
    out = []
    for s in acc:
        s *= scale
        s[1:-1] *= 2.0  # one-sided; L is even so the last bin is Nyquist
        out.append(s)
    freqs = np.fft.rfftfreq(L, 1.0 / fs)
    return freqs, out, nseg, warn


def welch_csd(x, y, fs: float, cfg: WelchConfig = WelchConfig()) -> WelchResult:
    """One-sided cross spectral density conj(X) Y in input^2/Hz.

    A white process of variance s2 gives a flat level 2 s2 / fs away from
    DC and Nyquist.  ``welch_csd(x, x)`` is real and non-negative.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgumentError("x and y must be 1-D with equal lengths")
    channels, pair = ([x], (0, 0)) if np.array_equal(x, y) else ([x, y], (0, 1))
    freqs, (s,), nseg, warn = _welch_products(channels, fs, cfg, [pair])
    return WelchResult(freqs, s, nseg, warn)


def noise_covariance(trace: QuadratureTrace, cfg: WelchConfig = WelchConfig()) -> NoiseSpectra:
    """Welch estimate of the 2x2 spectral covariance of (dI, dQ)."""
    (di, dq), mean = fluctuations(trace)
    freqs, (sii, sqq, siq), nseg, warn = _welch_products(
        [di, dq], trace.sample_rate, cfg, [(0, 0), (1, 1), (0, 1)])
    return NoiseSpectra(freqs, sii.real.copy(), sqq.real.copy(), siq, mean, nseg, warnings=warn)


def _phase_direction(spectra: NoiseSpectra, reference_angle):
    """Angle of the phase quadrature: perpendicular to the carrier."""
    if reference_angle is None:
        i_mean, q_mean = spectra.mean_field
        if i_mean == 0.0 and q_mean == 0.0:
            raise AmbiguityError(
                "mean field is zero, so phase and amplitude are undefined; "
                "pass reference_angle (carrier direction, radians from I)")
        reference_angle = math.atan2(q_mean, i_mean)
    return reference_angle + 0.5 * math.pi


def diagonalize(spectra: NoiseSpectra, reference_angle: float | None = None,
                mode: str = "per_bin") -> NoiseSpectra:
    """Rotate Re S(nu) to diag(S_aa, S_bb).

    ``rotation_angle`` is the angle (from the I axis) of the phase
    eigenvector, so O(nu) = [[cos, -sin], [sin, cos]] of that angle.  In
    ``mode="global"`` a single angle from the band-averaged Re S (DC and
    Nyquist excluded) is applied to every bin.
    """
    phase_dir = _phase_direction(spectra, reference_angle)
    sii, sqq, r = spectra.s_ii, spectra.s_qq, spectra.s_iq.real
    if mode == "per_bin":
        major = 0.5 * np.arctan2(2.0 * r, sii - sqq)
        mean = 0.5 * (sii + sqq)
        half = np.hypot(0.5 * (sii - sqq), r)
        lam_major, lam_minor = mean + half, mean - half
        # major axis closer to the phase direction than the minor axis?
        major_is_phase = np.abs(np.cos(major - phase_dir)) >= np.abs(np.sin(major - phase_dir))
        s_aa = np.where(major_is_phase, lam_major, lam_minor)
        s_bb = np.where(major_is_phase, lam_minor, lam_major)
        angle = np.where(major_is_phase, major, major + 0.5 * np.pi)
    elif mode == "global":
        band = spectra.interior()
        major = 0.5 * math.atan2(2.0 * np.mean(r[band]), np.mean(sii[band] - sqq[band]))
        if abs(math.cos(major - phase_dir)) < abs(math.sin(major - phase_dir)):
            major += 0.5 * math.pi
        c, s = math.cos(major), math.sin(major)
        s_aa = c * c * sii + 2.0 * c * s * r + s * s * sqq
        s_bb = s * s * sii - 2.0 * c * s * r + c * c * sqq
        angle = np.full(sii.shape, major)
    else:
        raise InvalidArgumentError("mode must be 'per_bin' or 'global'")
    angle = np.mod(angle + 0.5 * np.pi, np.pi) - 0.5 * np.pi
    return replace(spectra, s_aa=np.maximum(s_aa, 0.0), s_bb=np.maximum(s_bb, 0.0),
                   rotation_angle=angle)


def rotation_matrices(spectra: NoiseSpectra) -> np.ndarray:
    """O(nu) for every bin, shape (n_bins, 2, 2)."""
    c, s = np.cos(spectra.rotation_angle), np.sin(spectra.rotation_angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def phase_noise_psd(trace: QuadratureTrace, cfg: WelchConfig = WelchConfig(),
                    reference_angle: float | None = None, db_reference: float | None = None):
    """(frequencies, S_aa); in dB re ``db_reference`` when that is given."""
    spectra = diagonalize(noise_covariance(trace, cfg), reference_angle)
    if db_reference is None:
        return spectra.frequencies, spectra.s_aa
    with np.errstate(divide="ignore"):
        return spectra.frequencies, 10.0 * np.log10(spectra.s_aa / db_reference)


def write_spectra_csv(path, spectra: NoiseSpectra, db_reference: float | None = None) -> None:
    cols = CSV_COLUMNS + (["s_aa_db"] if db_reference is not None else [])
    n = spectra.frequencies.size
    nan = np.full(n, np.nan)
    s_aa = spectra.s_aa if spectra.s_aa is not None else nan
    data = [spectra.frequencies, spectra.s_ii, spectra.s_qq, spectra.s_iq.real,
            spectra.s_iq.imag, s_aa,
            spectra.s_bb if spectra.s_bb is not None else nan,
            spectra.rotation_angle if spectra.rotation_angle is not None else nan]
    if db_reference is not None:
        with np.errstate(divide="ignore"):
            data.append(10.0 * np.log10(s_aa / db_reference))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in zip(*data):
            writer.writerow([repr(float(v)) for v in row])


def read_spectra_csv(path, mean_field=(math.nan, math.nan)) -> NoiseSpectra:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        missing = set(CSV_COLUMNS) - set(header)
        if missing:
            raise InvalidArgumentError(f"spectra CSV lacks columns {sorted(missing)}")
        rows = np.array([[float(v) for v in row] for row in reader])
    col = {name: rows[:, header.index(name)] for name in CSV_COLUMNS}
    filled = not np.all(np.isnan(col["s_aa"]))
    return NoiseSpectra(
        frequencies=col["freq_hz"], s_ii=col["s_ii"], s_qq=col["s_qq"],
        s_iq=col["re_s_iq"] + 1j * col["im_s_iq"], mean_field=tuple(mean_field),
        n_segments=0,
        s_aa=col["s_aa"] if filled else None, s_bb=col["s_bb"] if filled else None,
        rotation_angle=col["rotation_rad"] if filled else None)
