"""Lorentzian (telegraph noise) and power-law fits to one-sided PSDs."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, stats
from scipy.special import expit

from .dynamics import SwitchingStats
from .errors import FitError, InvalidArgumentError, PreconditionError


@dataclass(frozen=True)
class LorentzianConfig:
    """Model-comparison settings.

    A fit is accepted when the F-test against a flat spectrum is significant
    at ``confidence``, the corner lies inside the fitted band, and the model
    spans at least ``min_contrast`` (max/min over the band).  The last two
    stop a Lorentzian from "explaining" a few-percent tilt of a white floor.
    """

    confidence: float = 0.95
    min_contrast: float = 2.0
    restarts: int = 5
    free_floor: bool = True


@dataclass(frozen=True)
class LorentzianFit:
    plateau: float
    corner_hz: float
    white_floor: float
    residual: float
    accepted: bool
    p_value: float
    n_bins: int
    band: tuple

    def model(self, f):
        f = np.asarray(f, dtype=float)
        return self.plateau / (1.0 + (f / self.corner_hz) ** 2) + self.white_floor

    def as_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    band: tuple
    residual: float

    def as_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RateReport:
    time_domain_rate: float
    frequency_domain_rate: float
    discrepancy: float
    passed: bool
    tolerance: float
    note: str = ""

    def as_record(self) -> dict:
        return asdict(self)


def _usable(freqs, psd, band, mask):
    freqs = np.asarray(freqs, dtype=float)
    psd = np.asarray(psd, dtype=float)
    if freqs.shape != psd.shape:
        raise InvalidArgumentError("freqs and psd must have the same shape")
    keep = (freqs > 0) & np.isfinite(psd) & (psd > 0)
    if band is not None:
        keep &= (freqs >= band[0]) & (freqs <= band[1])
    for lo, hi in mask or ():
        keep &= ~((freqs >= lo) & (freqs <= hi))
    return freqs[keep], psd[keep]


def _running_median(y, width):
    if y.size <= width:
        return np.full_like(y, np.median(y))
    pad = width // 2
    padded = np.pad(y, pad, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * pad + 1)
    return np.median(windows, axis=1)


def _initial_guess(f, s):
    n = f.size
    k = max(3, n // 10)
    plateau = float(np.median(s[:k]))
    floor = float(np.median(s[-k:]))
    smooth = _running_median(s, max(3, n // 50) | 1)
    target = floor + 0.5 * (plateau - floor)
    below = np.flatnonzero(smooth < target)
    if plateau > floor and below.size:
        corner = float(f[below[0]])
    else:
        corner = float(np.sqrt(f[0] * f[-1]))
    return max(plateau - floor, 1e-3 * plateau), corner, max(floor, 0.0)


def _log_residuals(x, logf, logs_rel, free_floor):
    # x = (ln plateau/P0, ln corner/f0, floor/plateau)
    ratio = x[2] if free_floor else 0.0
    return x[0] + np.log(expit(2.0 * (x[1] - logf)) + ratio) - logs_rel


def _polish(x, logf, logs_rel, free_floor, max_iter=50):
    """Gauss-Newton refinement to the stationary point.

    The trust-region solver stops on ftol, which only pins the parameters
    to ~sqrt(ftol); polishing makes the result independent of where it
    stopped, so scaling f or S changes the fit only at rounding level.
    """
    x = x.copy()
    free = [0, 1] + ([2] if free_floor and x[2] > 0 else [])
    r = _log_residuals(x, logf, logs_rel, free_floor)
    cost = r @ r
    for _ in range(max_iter):
        lor = expit(2.0 * (x[1] - logf))
        denom = lor + (x[2] if free_floor else 0.0)
        jac = np.column_stack([np.ones_like(logf), 2.0 * lor * (1.0 - lor) / denom, 1.0 / denom])
        step = np.linalg.lstsq(jac[:, free], -r, rcond=None)[0]
        trial = x.copy()
        trial[free] += step
        if free_floor and trial[2] < 0:
            break
        r_t = _log_residuals(trial, logf, logs_rel, free_floor)
        cost_t = r_t @ r_t
        # near the optimum cost changes are rounding noise; only reject real increases
        if not cost_t <= cost * (1.0 + 1e-12):
            break
        x, r, cost = trial, r_t, cost_t
        if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(x[free]))):
            break
    return x, 0.5 * cost


def fit_lorentzian(freqs, psd, mask=None, band=None,
                   config: LorentzianConfig = LorentzianConfig()) -> LorentzianFit:
    """Fit S(f) = plateau / (1 + (f/corner)^2) + floor in log-density space.

    Bins at f <= 0 and those inside ``mask`` ((lo, hi) notches) are
    dropped.  Deterministic restarts jitter the data-driven start.

    Raises
    ------
    InvalidArgumentError
        Fewer than 10 usable bins, or less than one decade of frequency.
    FitError
        When no restart converges.
    """
    f, s = _usable(freqs, psd, band, mask)
    if f.size < 10 or f[-1] < 10.0 * f[0]:
        raise InvalidArgumentError("need >= 10 usable bins spanning at least a decade")
    p0, c0, fl0 = _initial_guess(f, s)
    # parameters are relative to the start so scaling f or S is exact
    logf = np.log(f / c0)
    logs_rel = np.log(s / p0)
    n = f.size
    jitter = [(0.0, 0.0, 1.0), (0.0, -0.7, 1.0), (0.0, 0.7, 1.0), (0.5, 0.0, 0.3), (-0.5, 0.0, 3.0)]
    starts = [np.array([a, b, fl0 / p0 * m]) for a, b, m in jitter[: max(1, config.restarts)]]
    best = None
    failures = []
    for x0 in starts:
        if not config.free_floor:
            x0 = x0.copy()
            x0[2] = 0.0
        try:
            res = optimize.least_squares(
                _log_residuals, x0, args=(logf, logs_rel, config.free_floor),
                bounds=([-np.inf, -np.inf, 0.0], [np.inf, np.inf, np.inf]),
                method="trf", x_scale=[1.0, 1.0, max(fl0 / p0, 1e-6)],
                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        except (ValueError, FloatingPointError) as exc:
            failures.append(str(exc))
            continue
        if res.status <= 0 or not np.isfinite(res.cost):
            failures.append(res.message)
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise FitError("Lorentzian fit did not converge", {"messages": failures})
    x, cost = _polish(best.x, logf, logs_rel, config.free_floor)
    plateau = p0 * math.exp(x[0])
    corner = c0 * math.exp(x[1])
    floor = plateau * x[2] if config.free_floor else 0.0
    rss = 2.0 * cost
    rss_white = float(np.sum((logs_rel - logs_rel.mean()) ** 2))
    dof = n - 3
    if rss > 0 and dof > 0:
        F = max(rss_white - rss, 0.0) / 2.0 / (rss / dof)
        p_value = float(stats.f.sf(F, 2, dof))
    else:
        p_value = 0.0 if rss_white > rss else 1.0
    model = plateau / (1.0 + (f / corner) ** 2) + floor
    accepted = bool(
        p_value < 1.0 - config.confidence
        and f[0] <= corner <= f[-1]
        and model.max() >= config.min_contrast * model.min())
    return LorentzianFit(plateau, corner, floor, rss / n, accepted, p_value, n,
                         (float(f[0]), float(f[-1])))


def fit_powerlaw(freqs, psd, band) -> PowerLawFit:
    """Least-squares line through log10 S versus log10 f over ``band``."""
    f = np.asarray(freqs, dtype=float)
    s = np.asarray(psd, dtype=float)
    lo, hi = band
    if not (lo < hi):
        raise InvalidArgumentError("band must satisfy f_lo < f_hi")
    sel = (f >= lo) & (f <= hi) & (f > 0) & (s > 0)
    if np.count_nonzero(sel) < 8:
        raise InvalidArgumentError(
            f"band {band} holds {np.count_nonzero(sel)} usable bins, need >= 8")
    x, y = np.log10(f[sel]), np.log10(s[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return PowerLawFit(float(slope), float(10.0 ** intercept), (float(lo), float(hi)),
                       float(np.mean(resid ** 2)))


def rolloff_band(fit: LorentzianFit, lo_factor=2.0, hi_factor=20.0, floor_margin=10.0):
    """Band above the corner where the Lorentzian still dominates the floor.

    Runs from ``lo_factor * corner`` to the lesser of ``hi_factor * corner``
    and the frequency where the Lorentzian falls to ``floor_margin`` floors.
    """
    hi = hi_factor * fit.corner_hz
    if fit.white_floor > 0:
        ratio = fit.plateau / (floor_margin * fit.white_floor)
        if ratio <= 1.0:
            return None
        hi = min(hi, fit.corner_hz * math.sqrt(ratio - 1.0))
    lo = lo_factor * fit.corner_hz
    return (lo, hi) if hi > lo else None


def rate_consistency(stats: SwitchingStats, fit: LorentzianFit,
                     tolerance: float = 0.2) -> RateReport:
    """Compare time-domain and Lorentzian estimates of the per-state rate.

    For symmetric telegraph noise with per-state rate G the corner is G/pi
    and the total switching rate is G, so pi*corner is compared with
    ``stats.switching_rate``.
    """
    if not fit.accepted:
        raise PreconditionError("rate consistency needs an accepted Lorentzian fit")
    if stats.switch_count < 50:
        raise PreconditionError(
            f"rate consistency needs >= 50 switching events, got {stats.switch_count}")
    t_rate = stats.switching_rate
    f_rate = math.pi * fit.corner_hz
    disc = abs(f_rate - t_rate) / t_rate
    passed = disc <= tolerance
    note = ""
    imbalance = abs(stats.occupation[0] - stats.occupation[1])
    if not passed and imbalance > 0.2:
        note = (f"occupation {stats.occupation[0]:.2f}/{stats.occupation[1]:.2f} is asymmetric; "
                "the symmetric telegraph relation corner = rate/pi does not apply")
    elif not passed:
        note = "time- and frequency-domain rates disagree beyond tolerance"
    return RateReport(t_rate, f_rate, disc, passed, tolerance, note)
