"""Rotating-frame effective potential of an injection-locked JPO.

The potential is

    U(qx, qy) = (kappa/4) sqrt(P_p/P_th) (qy^2 - qx^2)
                - 3 gamma (qx^2 + qy^2)^2
                + sqrt(kappa_ext) |E_s| (qy cos(theta_s) - qx sin(theta_s))

with kappa = kappa_ext + kappa_int.  A bounded double well along qx needs
gamma < 0.  All quantities are dimensionless by default ("scaled units");
``ResonatorParams.scaled()`` gives the reference device with kappa = 4,
gamma = -1/12, for which the wells sit at qx = +-sqrt(2) with depth 1 at
threshold.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConvergenceError, DomainError, InvalidArgumentError, MonostableError


def _finite(name, value):
    if not np.all(np.isfinite(value)):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ResonatorParams:
    """Loss rates, resonance frequency and Kerr coefficient of the resonator.

    Rates are angular (rad/s in physical units).  ``gamma`` is stored signed
    and must be negative unless ``physical=False`` is passed to allow
    exploring the unbounded sign.
    """

    kappa_ext: float
    kappa_int: float
    omega_s: float
    gamma: float
    physical: bool = True

    def __post_init__(self):
        for name in ("kappa_ext", "kappa_int", "omega_s", "gamma"):
            _finite(name, getattr(self, name))
        if self.kappa_ext <= 0:
            raise InvalidArgumentError("kappa_ext must be > 0")
        if self.kappa_int < 0:
            raise InvalidArgumentError("kappa_int must be >= 0")
        if self.omega_s <= 0:
            raise InvalidArgumentError("omega_s must be > 0")
        if self.physical and self.gamma >= 0:
            raise InvalidArgumentError(
                "gamma must be negative for a bounded double-well potential")

    @property
    def kappa_tot(self) -> float:
        return self.kappa_ext + self.kappa_int

    @classmethod
    def scaled(cls, kappa=4.0, gamma=-1.0 / 12.0, omega_s=1.0) -> "ResonatorParams":
        """Dimensionless reference device (all loss external)."""
        return cls(kappa_ext=kappa, kappa_int=0.0, omega_s=omega_s, gamma=gamma)

    @classmethod
    def from_hz(cls, kappa_ext_hz, kappa_int_hz, omega_s_hz, gamma) -> "ResonatorParams":
        """Build from ordinary frequencies (kappa/2pi, omega/2pi)."""
        two_pi = 2.0 * math.pi
        return cls(kappa_ext=two_pi * kappa_ext_hz, kappa_int=two_pi * kappa_int_hz,
                   omega_s=two_pi * omega_s_hz, gamma=gamma)


@dataclass(frozen=True)
class DriveConfig:
    """Pump ratio P_p/P_th and the injection-locking signal |E_s|, theta_s.

    The pump sits at 2*omega_s; only the ratio to threshold enters.
    """

    pump_ratio: float
    ils_amplitude: float = 0.0
    ils_phase: float = 0.0

    def __post_init__(self):
        for name in ("pump_ratio", "ils_amplitude", "ils_phase"):
            _finite(name, getattr(self, name))
        if self.pump_ratio < 0:
            raise InvalidArgumentError("pump_ratio must be >= 0")
        if self.ils_amplitude < 0:
            raise InvalidArgumentError("ils_amplitude must be >= 0")
        object.__setattr__(self, "ils_phase", _wrap_phase(self.ils_phase))

    @property
    def above_threshold(self) -> bool:
        return self.pump_ratio > 1.0


def _wrap_phase(theta):
    # into [-pi, pi] so -pi/2 echoes as -pi/2 rather than 3pi/2
    return math.remainder(theta, 2.0 * math.pi)


class PhasePoint(NamedTuple):
    q_x: float
    q_y: float


class StationaryKind(str, Enum):
    MINIMUM = "minimum"
    SADDLE = "saddle"
    MAXIMUM = "maximum"


@dataclass(frozen=True)
class StationaryPoint:
    location: PhasePoint
    energy: float
    kind: StationaryKind
    hessian_eigenvalues: tuple

    def as_record(self) -> dict:
        return {
            "qx": float(self.location.q_x),
            "qy": float(self.location.q_y),
            "energy": float(self.energy),
            "kind": self.kind.value,
            "hess_eigs": [float(v) for v in self.hessian_eigenvalues],
        }


@dataclass(frozen=True)
class SearchConfig:
    """Multi-start damped Newton settings for ``find_stationary_points``."""

    dedup_radius: float = 1e-6  # in units of q*
    max_iter: int = 200
    grad_tol: float = 1e-13  # relative to the gradient scale a*q*


@dataclass(frozen=True)
class BarrierReport:
    """Barrier heights seen from each well and the well energy splitting.

    Well 0 is the minimum with q_x > 0 (the 0pi state), well 1 the one with
    q_x < 0.  ``well_energy_splitting`` is U(min_1) - U(min_0).
    """

    barrier_from_each_well: tuple
    well_energy_splitting: float
    minima: tuple = field(repr=False)
    saddle: StationaryPoint = field(repr=False)


def _coefficients(params: ResonatorParams, drive: DriveConfig):
    """Return (a, b, fx, fy): U = a/2 (qy^2 - qx^2) + b r^4 + fx qx + fy qy."""
    a = 0.5 * params.kappa_tot * math.sqrt(drive.pump_ratio)
    b = -3.0 * params.gamma
    s = math.sqrt(params.kappa_ext) * drive.ils_amplitude
    return a, b, -s * math.sin(drive.ils_phase), s * math.cos(drive.ils_phase)


def _unpack(q):
    qx, qy = q
    qx = np.asarray(qx, dtype=float)
    qy = np.asarray(qy, dtype=float)
    _finite("q", qx)
    _finite("q", qy)
    return qx, qy


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def potential_value(params: ResonatorParams, drive: DriveConfig, q):
    """Evaluate U at ``q = (q_x, q_y)``; components may be arrays."""
    qx, qy = _unpack(q)
    a, b, fx, fy = _coefficients(params, drive)
    r2 = qx * qx + qy * qy
    u = 0.5 * a * (qy * qy - qx * qx) + b * r2 * r2 + fx * qx + fy * qy
    return _scalar_or_array(u)


def potential_gradient(params: ResonatorParams, drive: DriveConfig, q) -> np.ndarray:
    """Analytic gradient (dU/dq_x, dU/dq_y), stacked along the first axis."""
    qx, qy = _unpack(q)
    a, b, fx, fy = _coefficients(params, drive)
    r2 = qx * qx + qy * qy
    gx = -a * qx + 4.0 * b * r2 * qx + fx
    gy = a * qy + 4.0 * b * r2 * qy + fy
    return np.array([gx, gy])


def potential_hessian(params: ResonatorParams, drive: DriveConfig, q) -> np.ndarray:
    qx, qy = _unpack(q)
    a, b, _, _ = _coefficients(params, drive)
    hxx = -a + 4.0 * b * (3.0 * qx * qx + qy * qy)
    hyy = a + 4.0 * b * (qx * qx + 3.0 * qy * qy)
    hxy = 8.0 * b * qx * qy
    return np.array([[hxx, hxy], [hxy, hyy]])


def well_location(params: ResonatorParams, drive: DriveConfig) -> float:
    """Closed-form q* of the ILS-free wells, q*^2 = kappa sqrt(r) / (24 |gamma|)."""
    return math.sqrt(params.kappa_tot * math.sqrt(drive.pump_ratio) / (24.0 * abs(params.gamma)))


def barrier_height(params: ResonatorParams, drive: DriveConfig) -> float:
    """Closed-form ILS-free barrier, kappa^2 r / (192 |gamma|)."""
    return params.kappa_tot ** 2 * drive.pump_ratio / (192.0 * abs(params.gamma))


def _classify(eigs) -> StationaryKind:
    lo, hi = eigs
    if lo > 0:
        return StationaryKind.MINIMUM
    if hi < 0:
        return StationaryKind.MAXIMUM
    return StationaryKind.SADDLE


def _newton(params, drive, start, scale, cfg):
    """Levenberg-damped Newton iteration on grad U = 0."""
    q = np.array(start, dtype=float)
    g = potential_gradient(params, drive, q)
    gnorm = float(np.hypot(*g))
    mu = 1e-3
    tol = cfg.grad_tol * scale
    for it in range(cfg.max_iter):
        if gnorm <= tol:
            return q, it, gnorm
        h = potential_hessian(params, drive, q)
        while True:
            step = -np.linalg.solve(h.T @ h + mu * np.eye(2), h.T @ g)
            trial = q + step
            g_trial = potential_gradient(params, drive, trial)
            trial_norm = float(np.hypot(*g_trial))
            if trial_norm < gnorm or mu > 1e12:
                break
            mu *= 10.0
        if trial_norm >= gnorm:
            # stalled: accept only if already at machine precision
            return (q, it, gnorm) if gnorm <= 1e3 * tol else (None, it, gnorm)
        q, g, gnorm = trial, g_trial, trial_norm
        mu = max(mu * 0.1, 1e-15)
    return (q, cfg.max_iter, gnorm) if gnorm <= tol else (None, cfg.max_iter, gnorm)


def find_stationary_points(params: ResonatorParams, drive: DriveConfig,
                           search: SearchConfig = SearchConfig()) -> list:
    """Locate every stationary point of U from a 9-point multi-start grid.

    Starts are the origin, (+-q*, 0), (0, +-q*) and the four diagonals, with
    q* the ILS-free well location.  Results are deduplicated, classified by
    Hessian eigenvalues and sorted by q_x.

    Raises
    ------
    DomainError
        Below threshold (pump_ratio < 1), where the potential as written does
        not describe the oscillator.
    ConvergenceError
        If no start converges within ``search.max_iter`` iterations.
    """
    if drive.pump_ratio < 1.0:
        raise DomainError(
            f"pump_ratio={drive.pump_ratio} is below threshold; the rotating-frame "
            "potential only describes the oscillating regime")
    qs = well_location(params, drive)
    a = _coefficients(params, drive)[0]
    scale = max(a * qs, 1e-300)
    starts = [(0.0, 0.0), (qs, 0.0), (-qs, 0.0), (0.0, qs), (0.0, -qs),
              (qs, qs), (qs, -qs), (-qs, qs), (-qs, -qs)]
    found = []
    diagnostics = []
    for start in starts:
        q, iters, gnorm = _newton(params, drive, start, scale, search)
        diagnostics.append({"start": start, "iterations": iters, "grad_norm": gnorm})
        if q is None:
            continue
        if any(np.hypot(*(q - p)) <= search.dedup_radius * qs for p in found):
            continue
        found.append(q)
    if not found:
        raise ConvergenceError("no stationary point converged", {"starts": diagnostics})
    points = []
    for q in sorted(found, key=lambda p: (p[0], p[1])):
        eigs = tuple(float(v) for v in np.linalg.eigvalsh(potential_hessian(params, drive, q)))
        loc = PhasePoint(float(q[0]), float(q[1]))
        points.append(StationaryPoint(loc, potential_value(params, drive, loc), _classify(eigs), eigs))
    return points


def minima(points) -> list:
    return [p for p in points if p.kind is StationaryKind.MINIMUM]


def barrier_and_asymmetry(params: ResonatorParams, drive: DriveConfig,
                          search: SearchConfig = SearchConfig()) -> BarrierReport:
    points = find_stationary_points(params, drive, search)
    mins = minima(points)
    if len(mins) < 2:
        raise MonostableError(
            f"found {len(mins)} minimum; the ILS (|E_s|={drive.ils_amplitude}) "
            "exceeds the bistable range")
    well0 = max(mins, key=lambda p: p.location.q_x)
    well1 = min(mins, key=lambda p: p.location.q_x)
    saddles = [p for p in points if p.kind is StationaryKind.SADDLE]
    if not saddles:
        raise MonostableError("no saddle separates the minima")
    # the activation path crosses the lowest saddle
    saddle = min(saddles, key=lambda p: p.energy)
    barriers = (saddle.energy - well0.energy, saddle.energy - well1.energy)
    return BarrierReport(barriers, well1.energy - well0.energy, (well0, well1), saddle)


def cross_section(params: ResonatorParams, drive: DriveConfig, grid) -> np.ndarray:
    """Sample U(q_x, 0) on a monotone grid; returns an (n, 2) array of (q_x, U)."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidArgumentError("grid must be a non-empty 1-D array")
    d = np.diff(grid)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise InvalidArgumentError("grid must be strictly monotone")
    u = potential_value(params, drive, (grid, np.zeros_like(grid)))
    return np.column_stack([grid, np.atleast_1d(u)])


def write_cross_section_csv(path, curve: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q_x", "U"])
        for qx, u in curve:
            writer.writerow([repr(float(qx)), repr(float(u))])


def write_stationary_points_json(path, points: Iterable[StationaryPoint]) -> None:
    with open(path, "w") as fh:
        json.dump([p.as_record() for p in points], fh, indent=2)
