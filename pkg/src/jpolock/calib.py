"""Power unit conversions and ILS photon-number calibration."""
from __future__ import annotations

import math

from .errors import DomainError, InvalidArgumentError
from .potential import ResonatorParams

# CODATA 2018, J s
HBAR = 1.054571817e-34


def dbm_to_watts(level_dbm: float) -> float:
    if not math.isfinite(level_dbm):
        raise InvalidArgumentError("power level must be finite")
    return 1e-3 * 10.0 ** (level_dbm / 10.0)


def watts_to_dbm(power_w: float) -> float:
    if not power_w > 0:
        raise DomainError(f"dBm is undefined for non-positive power {power_w!r} W")
    return 10.0 * math.log10(power_w / 1e-3)


def photon_number(p_s: float, params: ResonatorParams) -> float:
    """Mean intracavity photon number N_p = 4 P_s kappa_ext / (hbar omega_s kappa_tot^2).

    ``params`` must hold angular rates in rad/s.
    """
    if not p_s >= 0:
        raise InvalidArgumentError(f"power must be >= 0, got {p_s!r}")
    return 4.0 * p_s * params.kappa_ext / (HBAR * params.omega_s * params.kappa_tot ** 2)


def power_for_photon_number(n_p: float, params: ResonatorParams) -> float:
    """Inverse of :func:`photon_number`: ILS power (W) that yields ``n_p`` photons."""
    if not n_p >= 0:
        raise InvalidArgumentError(f"photon number must be >= 0, got {n_p!r}")
    return n_p * HBAR * params.omega_s * params.kappa_tot ** 2 / (4.0 * params.kappa_ext)


def ils_amplitude_from_power(p_s: float, params: ResonatorParams) -> float:
    """|E_s| = sqrt(P_s / (hbar omega_s)) in sqrt(photons/s)."""
    if not p_s >= 0:
        raise InvalidArgumentError(f"power must be >= 0, got {p_s!r}")
    return math.sqrt(p_s / (HBAR * params.omega_s))


def ils_amplitude_for_photon_number(n_p: float, params: ResonatorParams) -> float:
    """|E_s| producing ``n_p`` cavity photons.

    Combining the two relations above gives
    sqrt(kappa_ext) |E_s| = kappa_tot sqrt(n_p) / 2, independent of hbar and
    omega_s, so this also works for dimensionless resonator parameters.
    """
    if not n_p >= 0:
        raise InvalidArgumentError(f"photon number must be >= 0, got {n_p!r}")
    return params.kappa_tot * math.sqrt(n_p) / (2.0 * math.sqrt(params.kappa_ext))


def pump_ratio_from_powers(p_p: float, p_th: float) -> float:
    """P_p / P_th, the value ``DriveConfig.pump_ratio`` expects."""
    if not p_th > 0:
        raise DomainError(f"threshold power must be > 0, got {p_th!r}")
    if not p_p >= 0:
        raise InvalidArgumentError(f"pump power must be >= 0, got {p_p!r}")
    return p_p / p_th
