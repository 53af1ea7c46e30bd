"""Overdamped Langevin dynamics in the JPO potential and switching statistics.

Trajectories follow dq = -grad U dt + sqrt(2 D) dW in scaled time.  The
physical time axis (seconds, sample rate in Hz) is attached by
``SimulationConfig.time_scale`` (scaled time units per second), which only
labels axes and sets PSD frequencies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numba
import numpy as np

from .errors import AliasingError, InstabilityError, InvalidArgumentError, JPOError
from .potential import (
    DriveConfig,
    PhasePoint,
    ResonatorParams,
    _coefficients,
    find_stationary_points,
    minima,
    potential_hessian,
    well_location,
)

INITIAL_TOKENS = ("well0", "well1", "saddle", "deepest")
# normals drawn per RNG call; fixed so traces do not depend on memory layout
_CHUNK_STEPS = 1 << 21


@dataclass(frozen=True)
class SimulationConfig:
    """Integration and sampling settings.

    ``dt`` is in seconds (same axis as ``duration``); ``None`` picks
    ``dt_safety / lambda_max`` in scaled time, capped at one sample interval.
    ``initial_point`` is a ``PhasePoint`` or one of ``INITIAL_TOKENS``;
    ``well0`` is the q_x > 0 minimum, ``deepest`` the lowest minimum.
    """

    duration: float = 10.0
    sample_rate: float = 1e6
    noise_intensity: float = 0.0
    seed: int = 0
    initial_point: Union[str, PhasePoint] = "well0"
    dt: float | None = None
    time_scale: float = 1e6
    dt_safety: float = 0.05

    def __post_init__(self):
        if not (self.duration > 0 and self.sample_rate > 0 and self.time_scale > 0):
            raise InvalidArgumentError("duration, sample_rate and time_scale must be > 0")
        n = self.duration * self.sample_rate
        if abs(n - round(n)) > 1e-6 * max(1.0, n) or round(n) < 2:
            raise InvalidArgumentError(
                f"duration*sample_rate must be an integer >= 2, got {n}")
        if self.dt is not None and not (0 < self.dt <= 1.0 / self.sample_rate * (1 + 1e-12)):
            raise InvalidArgumentError("dt must satisfy 0 < dt <= 1/sample_rate")
        if not self.noise_intensity >= 0:
            raise InvalidArgumentError("noise_intensity must be >= 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidArgumentError("seed must fit in an unsigned 64-bit integer")
        if isinstance(self.initial_point, str):
            if self.initial_point not in INITIAL_TOKENS:
                raise InvalidArgumentError(f"unknown initial point {self.initial_point!r}")
        else:
            object.__setattr__(self, "initial_point", PhasePoint(*map(float, self.initial_point)))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass(frozen=True)
class QuadratureTrace:
    """Uniformly sampled (I, Q) record; arrays are made read-only."""

    sample_rate: float
    i_samples: np.ndarray
    q_samples: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        i = np.array(self.i_samples, dtype=float)
        q = np.array(self.q_samples, dtype=float)
        if i.ndim != 1 or i.shape != q.shape or i.size < 2:
            raise InvalidArgumentError("I and Q must be 1-D arrays of equal length >= 2")
        if not self.sample_rate > 0:
            raise InvalidArgumentError("sample_rate must be > 0")
        if not (np.all(np.isfinite(i)) and np.all(np.isfinite(q))):
            raise InvalidArgumentError("trace samples must be finite")
        i.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "i_samples", i)
        object.__setattr__(self, "q_samples", q)

    def __len__(self):
        return self.i_samples.size

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    def projection(self, angle: float = 0.0) -> np.ndarray:
        """Component along the unit vector at ``angle`` from the I axis."""
        return self.i_samples * math.cos(angle) + self.q_samples * math.sin(angle)


@dataclass(frozen=True)
class LabelConfig:
    """Schmitt-trigger thresholds on the projection axis (field units)."""

    lower: float
    upper: float
    axis_angle: float = 0.0

    def __post_init__(self):
        if not (self.lower < 0 < self.upper):
            raise InvalidArgumentError(
                f"thresholds must straddle zero, got ({self.lower}, {self.upper})")

    @classmethod
    def symmetric(cls, q_ref: float, fraction: float = 0.5) -> "LabelConfig":
        return cls(-fraction * q_ref, fraction * q_ref)

    @classmethod
    def for_potential(cls, params: ResonatorParams, drive: DriveConfig,
                      fraction: float = 0.5) -> "LabelConfig":
        return cls.symmetric(well_location(params, drive), fraction)


@dataclass(frozen=True)
class SwitchingStats:
    """Per-sample labels (0 = 0pi, q_x > 0 side; 1 = 1pi) and derived numbers."""

    labels: np.ndarray
    dwell_times: np.ndarray
    dwell_states: np.ndarray
    occupation: tuple
    switch_count: int
    switching_rate: float
    duration: float

    def mean_dwell(self, state: int) -> float:
        d = self.dwell_times[self.dwell_states == state]
        return float(d.mean()) if d.size else math.nan

    def as_record(self) -> dict:
        return {
            "occupation": [float(v) for v in self.occupation],
            "switch_count": int(self.switch_count),
            "switching_rate": float(self.switching_rate),
            "duration_s": float(self.duration),
            "n_dwells": int(self.dwell_times.size),
            "mean_dwell_s": [self.mean_dwell(0), self.mean_dwell(1)],
        }


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def modes(self, split: float = 0.0) -> tuple:
        """Peak location on each side of ``split`` as (below, above).

        Each peak is refined by a parabola through the log-counts of the
        highest bin and its neighbours; a side with no counts gives None.
        """
        centers, counts = self.centers, self.counts.astype(float)
        out = []
        for side in (centers < split, centers >= split):
            idx = np.flatnonzero(side & (counts > 0))
            if idx.size == 0:
                out.append(None)
                continue
            k = int(idx[np.argmax(counts[idx])])
            x = float(centers[k])
            if 0 < k < counts.size - 1 and counts[k - 1] > 0 and counts[k + 1] > 0:
                lm, l0, lp = np.log(counts[k - 1:k + 2])
                curv = lm - 2.0 * l0 + lp
                if curv < 0:
                    x += 0.5 * self.width * (lm - lp) / curv
            out.append(x)
        return tuple(out)


def derive_seed(base_seed: int, index: int) -> int:
    """Independent 64-bit child seed for sweep member ``index``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@numba.njit(cache=True, inline="always")
def _drift(x, y, a, b, fx, fy):
    # -grad U; swap this for a richer flow if needed
    r2 = x * x + y * y
    return a * x - 4.0 * b * r2 * x - fx, -a * y - 4.0 * b * r2 * y - fy


@numba.njit(cache=True)
def _euler_chunk(x, y, noise, h, n_sub, a, b, fx, fy, limit2, out, start):
    """Advance ``out.shape[0] - start`` samples or until ``noise`` runs out.

    Returns (x, y, next_sample, escaped).
    """
    k = 0
    n_noise = noise.shape[0]
    i = start
    while i < out.shape[0] and k + n_sub <= n_noise:
        for _ in range(n_sub):
            dx, dy = _drift(x, y, a, b, fx, fy)
            x = x + h * dx + noise[k, 0]
            y = y + h * dy + noise[k, 1]
            k += 1
        out[i, 0] = x
        out[i, 1] = y
        if x * x + y * y > limit2:
            return x, y, i, True
        i += 1
    return x, y, i, False


def _initial_location(params, drive, token) -> PhasePoint:
    if isinstance(token, PhasePoint):
        return token
    if token == "saddle":
        return PhasePoint(0.0, 0.0)
    qs = well_location(params, drive)
    mins = minima(find_stationary_points(params, drive))
    if token == "deepest":
        return min(mins, key=lambda p: p.energy).location
    sign = 1.0 if token == "well0" else -1.0
    side = [p for p in mins if sign * p.location.q_x > 0]
    if side:
        return side[0].location
    # the requested well no longer exists; start where it used to be
    return PhasePoint(sign * qs, 0.0)


def step_size(params: ResonatorParams, drive: DriveConfig, sim: SimulationConfig):
    """Return (h, n_sub): scaled Euler step and steps per output sample."""
    interval = sim.time_scale / sim.sample_rate
    if sim.dt is not None:
        h_req = sim.dt * sim.time_scale
    else:
        lam = max(max(abs(v) for v in np.linalg.eigvalsh(potential_hessian(params, drive, p.location)))
                  for p in minima(find_stationary_points(params, drive)))
        h_req = min(sim.dt_safety / lam, interval)
    n_sub = max(1, math.ceil(interval / h_req - 1e-9))
    return interval / n_sub, n_sub


def simulate_trace(params: ResonatorParams, drive: DriveConfig,
                   sim: SimulationConfig) -> QuadratureTrace:
    """Euler-Maruyama integration sampled at ``sim.sample_rate``.

    The first sample is the initial point.  Identical inputs (including
    ``sim.seed``) give bit-identical traces.

    Raises
    ------
    InstabilityError
        If |q| exceeds 4 q*, which signals a too-large step or noise level.
    """
    if drive.pump_ratio < 1.0:
        raise InvalidArgumentError("simulate_trace needs pump_ratio >= 1")
    a, b, fx, fy = _coefficients(params, drive)
    qs = well_location(params, drive)
    h, n_sub = step_size(params, drive, sim)
    start = _initial_location(params, drive, sim.initial_point)
    n = sim.n_samples
    out = np.empty((n, 2))
    out[0] = start
    x, y = float(start[0]), float(start[1])
    sigma = math.sqrt(2.0 * sim.noise_intensity * h)
    limit2 = (4.0 * qs) ** 2
    rng = _generator(sim.seed)
    chunk_samples = max(1, _CHUNK_STEPS // n_sub)
    i = 1
    zeros = np.zeros((chunk_samples * n_sub, 2))
    while i < n:
        m = min(chunk_samples, n - i)
        if sigma > 0:
            noise = rng.standard_normal((m * n_sub, 2))
            noise *= sigma
        else:
            noise = zeros[: m * n_sub]
        x, y, i, escaped = _euler_chunk(x, y, noise, h, n_sub, a, b, fx, fy, limit2, out, i)
        if escaped:
            raise InstabilityError(
                f"trajectory left |q| <= 4q* at sample {i} (t={i / sim.sample_rate:.6g} s); "
                "reduce dt or the noise intensity")
    metadata = {
        "params": params.__dict__.copy(),
        "drive": drive.__dict__.copy(),
        "sim": {k: (list(v) if isinstance(v, PhasePoint) else v) for k, v in sim.__dict__.items()},
        "seed": int(sim.seed),
        "step_scaled": h,
        "steps_per_sample": n_sub,
        "q_star": qs,
    }
    return QuadratureTrace(sim.sample_rate, out[:, 0], out[:, 1], metadata)


def _schmitt(proj: np.ndarray, lower: float, upper: float) -> np.ndarray:
    state = np.full(proj.size, -1, dtype=np.int8)
    state[proj >= upper] = 0
    state[proj <= lower] = 1
    if state[0] < 0:
        state[0] = 0 if proj[0] >= 0 else 1
    idx = np.where(state >= 0, np.arange(proj.size), 0)
    np.maximum.accumulate(idx, out=idx)
    return state[idx]


def label_states(trace: QuadratureTrace, rule: LabelConfig) -> SwitchingStats:
    """Hysteresis labelling of the projection onto the inter-well axis.

    A state flips only when the projection reaches the far threshold.  Dwell
    times include the (possibly truncated) first and last visits.
    """
    labels = _schmitt(trace.projection(rule.axis_angle), rule.lower, rule.upper)
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    bounds = np.concatenate([[0], change, [labels.size]])
    dwell = np.diff(bounds) / trace.sample_rate
    frac1 = float(np.count_nonzero(labels)) / labels.size
    return SwitchingStats(
        labels=labels,
        dwell_times=dwell,
        dwell_states=labels[bounds[:-1]],
        occupation=(1.0 - frac1, frac1),
        switch_count=int(change.size),
        switching_rate=change.size / trace.duration,
        duration=trace.duration,
    )


def histogram(trace: QuadratureTrace, axis: str = "I", bins: int = 50,
              axis_angle: float = 0.0) -> Histogram:
    """Counts over [min, max] of the chosen channel ("I", "Q" or "projection")."""
    if bins < 2:
        raise InvalidArgumentError("bins must be >= 2")
    data = {"I": trace.i_samples, "Q": trace.q_samples}.get(axis)
    if data is None:
        if axis != "projection":
            raise InvalidArgumentError(f"unknown axis {axis!r}")
        data = trace.projection(axis_angle)
    counts, edges = np.histogram(data, bins=bins)
    return Histogram(edges, counts)


def telegraph_reference(rate: float, amplitude: float, sample_rate: float,
                        duration: float, seed: int) -> QuadratureTrace:
    """Symmetric random telegraph signal +-amplitude on I (Q is zero).

    Dwell times are exponential with mean 1/rate, so the autocorrelation is
    amplitude^2 exp(-2 rate tau) and the one-sided PSD a Lorentzian with
    plateau 2 amplitude^2 / rate and corner rate/pi.
    """
    if not rate > 0:
        raise InvalidArgumentError("rate must be > 0")
    if rate >= sample_rate / 10.0:
        raise AliasingError(
            f"rate {rate} is not << sample_rate {sample_rate}; the switching would alias")
    n = duration * sample_rate
    if abs(n - round(n)) > 1e-6 * max(1.0, n) or round(n) < 2:
        raise InvalidArgumentError("duration*sample_rate must be an integer >= 2")
    n = int(round(n))
    rng = _generator(seed)
    first = rng.integers(0, 2)
    # draw switch epochs in blocks until they cover the record
    epochs = []
    t = 0.0
    expected = int(rate * duration) + 16
    while t < duration:
        block = np.cumsum(rng.exponential(1.0 / rate, size=expected)) + t
        epochs.append(block)
        t = block[-1]
    epochs = np.concatenate(epochs)
    times = np.arange(n) / sample_rate
    flips = np.searchsorted(epochs, times, side="right")
    sign = np.where((flips + first) % 2 == 0, 1.0, -1.0)
    i = amplitude * sign if amplitude != 0 else np.zeros(n)
    meta = {"generator": "telegraph", "rate": rate, "amplitude": amplitude,
            "seed": int(seed), "n_switches": int(np.count_nonzero(epochs < times[-1]))}
    return QuadratureTrace(sample_rate, i, np.zeros(n), meta)


@dataclass(frozen=True)
class ScanEntry:
    amplitude: float
    switching_rate: float | None
    switch_count: int | None
    seed: int
    error: str | None = None


def kramers_scan(params: ResonatorParams, drive_base: DriveConfig,
                 ils_amplitudes: Sequence[float], sim: SimulationConfig,
                 rule: LabelConfig | None = None) -> list:
    """Switching rate versus ILS amplitude.

    Member ``k`` runs with seed ``derive_seed(sim.seed, k)``; failures are
    reported per entry instead of aborting the scan.
    """
    if rule is None:
        rule = LabelConfig.for_potential(params, drive_base)
    entries = []
    for k, amp in enumerate(ils_amplitudes):
        seed = derive_seed(sim.seed, k)
        try:
            drive = replace(drive_base, ils_amplitude=float(amp))
            trace = simulate_trace(params, drive, replace(sim, seed=seed))
            stats = label_states(trace, rule)
            entries.append(ScanEntry(float(amp), stats.switching_rate, stats.switch_count, seed))
        except JPOError as exc:
            entries.append(ScanEntry(float(amp), None, None, seed, f"{type(exc).__name__}: {exc}"))
    return entries
