"""Experiment configuration: JSON schema, defaults and resolution.

Keys carry their units: ``*_hz`` is an ordinary frequency (kappa/2pi),
``*_rad_per_s`` an angular rate, ``*_scaled`` a dimensionless model
quantity, ``*_s`` seconds, ``*_rad`` radians, ``*_dbm`` dBm.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import jsonschema

from . import calib
from .dynamics import SimulationConfig, derive_seed
from .errors import ConfigError, JPOError
from .potential import DriveConfig, PhasePoint, ResonatorParams
from .spectra import WelchConfig

FORMATS = ("csv", "json", "svg")

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}

SCHEMA = {
    "type": "object",
    "required": ["resonator", "drive", "simulation", "sweep"],
    "properties": {
        "resonator": {
            "oneOf": [
                {"type": "object", "additionalProperties": False,
                 "required": ["units", "kappa_ext_scaled", "gamma_scaled"],
                 "properties": {"units": {"const": "scaled"}, "kappa_ext_scaled": _num,
                                "kappa_int_scaled": _num, "omega_s_scaled": _num,
                                "gamma_scaled": _num}},
                {"type": "object", "additionalProperties": False,
                 "required": ["units", "kappa_ext_hz", "kappa_int_hz", "omega_s_hz",
                              "gamma_rad_per_s"],
                 "properties": {"units": {"const": "physical"}, "kappa_ext_hz": _num,
                                "kappa_int_hz": _num, "omega_s_hz": _num,
                                "gamma_rad_per_s": _num}},
            ]
        },
        "drive": {
            "type": "object", "additionalProperties": False,
            "properties": {"pump_ratio": _num, "pump_power_dbm": _num,
                           "threshold_power_dbm": _num, "ils_phase_rad": _num},
        },
        "simulation": {
            "type": "object", "additionalProperties": False,
            "properties": {"duration_s": _num, "sample_rate_hz": _num,
                           "time_scale_per_s": _num, "noise_intensity": _num,
                           "seed": {"type": "integer", "minimum": 0,
                                    "maximum": 18446744073709551615},
                           "initial_point": {"oneOf": [
                               {"enum": ["well0", "well1", "saddle", "deepest"]},
                               {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]},
                           "dt_s": _opt_num, "dt_safety": _num},
        },
        "welch": {
            "type": "object", "additionalProperties": False,
            "properties": {"segment_length": {"type": "integer"}, "overlap_fraction": _num,
                           "window": {"enum": ["hann", "rectangular", "blackman"]},
                           "detrend": {"enum": ["mean", "none"]}},
        },
        "analysis": {
            "type": "object", "additionalProperties": False,
            "properties": {"label_fraction": _num, "label_threshold_scaled": _opt_num,
                           "histogram_bins": {"type": "integer", "minimum": 2},
                           "carrier_angle_rad": _opt_num, "lorentzian_confidence": _num,
                           "rate_tolerance": _num, "db_reference": _opt_num},
        },
        "sweep": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "additionalProperties": False,
                      "properties": {"ils_amplitude_scaled": _num,
                                     "ils_amplitude_sqrt_photons_per_s": _num,
                                     "n_photons": _num, "ils_power_dbm": _num,
                                     "ils_phase_rad": _num, "label": {"type": "string"}}},
        },
        "output_dir": {"type": "string"},
        "formats": {"type": "array", "items": {"enum": list(FORMATS)}},
        "workers": {"type": "integer", "minimum": 1},
    },
}

# Fixed pump, theta_s = -pi/2, ILS strength stepped from zero to full pinning.
DEFAULT_CONFIG = {
    "resonator": {"units": "scaled", "kappa_ext_scaled": 4.0, "kappa_int_scaled": 0.0,
                  "omega_s_scaled": 1.0, "gamma_scaled": -1.0 / 12.0},
    "drive": {"pump_ratio": 1.0, "ils_phase_rad": -math.pi / 2},
    "simulation": {"duration_s": 1.0, "sample_rate_hz": 1e6, "time_scale_per_s": 1e6,
                   "noise_intensity": 0.18, "seed": 20230417, "initial_point": "deepest",
                   "dt_s": None, "dt_safety": 0.05},
    "welch": {"segment_length": 65536, "overlap_fraction": 0.5, "window": "hann",
              "detrend": "mean"},
    "analysis": {"label_fraction": 0.5, "label_threshold_scaled": None, "histogram_bins": 60,
                 "carrier_angle_rad": math.pi / 2, "lorentzian_confidence": 0.95,
                 "rate_tolerance": 0.2, "db_reference": None},
    "sweep": [{"ils_amplitude_scaled": a} for a in (0.0, 0.04, 0.08, 0.12, 0.6)],
    "output_dir": "run",
    "formats": ["csv", "json", "svg"],
    "workers": 1,
}


@dataclass(frozen=True)
class AnalysisConfig:
    label_fraction: float = 0.5
    label_threshold_scaled: float | None = None
    histogram_bins: int = 60
    carrier_angle_rad: float | None = math.pi / 2
    lorentzian_confidence: float = 0.95
    rate_tolerance: float = 0.2
    db_reference: float | None = None


@dataclass(frozen=True)
class Member:
    index: int
    drive: DriveConfig
    seed: int
    label: str
    n_photons: float | None = None

    def as_record(self) -> dict:
        return {"index": self.index, "label": self.label, "seed": self.seed,
                "n_photons": self.n_photons, "pump_ratio": self.drive.pump_ratio,
                "ils_amplitude": self.drive.ils_amplitude, "ils_phase_rad": self.drive.ils_phase}


@dataclass(frozen=True)
class ExperimentConfig:
    resonator: ResonatorParams
    drive_base: DriveConfig
    sim: SimulationConfig
    welch: WelchConfig
    analysis: AnalysisConfig
    members: tuple
    output_dir: str
    formats: tuple
    workers: int
    raw: dict = field(repr=False, compare=False)


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "resonator":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config_file(path) -> dict:
    """Read a config or a run manifest (whose ``config`` entry is used)."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if isinstance(data, dict) and "manifest_version" in data:
        data = data["config"]
    return data


def resolve(raw: dict, seed: int | None = None, output_dir: str | None = None,
            workers: int | None = None, formats=None) -> ExperimentConfig:
    """Validate ``raw`` (merged over the defaults) and build typed objects."""
    merged = _merge(DEFAULT_CONFIG, raw)
    user_drive = raw.get("drive", {}) if isinstance(raw, dict) else {}
    if "pump_power_dbm" in user_drive and "pump_ratio" not in user_drive:
        # powers replace the default ratio rather than competing with it
        merged["drive"].pop("pump_ratio", None)
    if seed is not None:
        merged["simulation"]["seed"] = int(seed)
    if output_dir is not None:
        merged["output_dir"] = str(output_dir)
    if workers is not None:
        merged["workers"] = int(workers)
    if formats is not None:
        merged["formats"] = list(formats)
    try:
        jsonschema.validate(merged, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc
    try:
        return _build(merged)
    except JPOError as exc:
        raise ConfigError(f"config error: {exc}") from exc


def _build(cfg: dict) -> ExperimentConfig:
    res = cfg["resonator"]
    physical = res["units"] == "physical"
    if physical:
        params = ResonatorParams.from_hz(res["kappa_ext_hz"], res["kappa_int_hz"],
                                         res["omega_s_hz"], res["gamma_rad_per_s"])
    else:
        params = ResonatorParams(res["kappa_ext_scaled"], res.get("kappa_int_scaled", 0.0),
                                 res.get("omega_s_scaled", 1.0), res["gamma_scaled"])
    drv = cfg["drive"]
    if "pump_ratio" in drv and "pump_power_dbm" in drv:
        raise ConfigError("drive: give pump_ratio or pump powers, not both")
    if "pump_ratio" in drv:
        pump = drv["pump_ratio"]
    elif "pump_power_dbm" in drv and "threshold_power_dbm" in drv:
        pump = calib.pump_ratio_from_powers(calib.dbm_to_watts(drv["pump_power_dbm"]),
                                            calib.dbm_to_watts(drv["threshold_power_dbm"]))
    else:
        raise ConfigError("drive needs pump_ratio or pump_power_dbm + threshold_power_dbm")
    drive_base = DriveConfig(pump, 0.0, drv.get("ils_phase_rad", -math.pi / 2))
    s = cfg["simulation"]
    init = s["initial_point"]
    sim = SimulationConfig(
        duration=s["duration_s"], sample_rate=s["sample_rate_hz"],
        noise_intensity=s["noise_intensity"], seed=s["seed"],
        initial_point=init if isinstance(init, str) else PhasePoint(*init),
        dt=s["dt_s"], time_scale=s["time_scale_per_s"], dt_safety=s["dt_safety"])
    welch = WelchConfig(**cfg["welch"])
    analysis = AnalysisConfig(**cfg["analysis"])
    members = []
    for k, entry in enumerate(cfg["sweep"]):
        amp, n_ph = _member_amplitude(entry, params, physical, k)
        phase = entry.get("ils_phase_rad", drive_base.ils_phase)
        drive = DriveConfig(drive_base.pump_ratio, amp, phase)
        label = entry.get("label") or (f"N_p={n_ph:g}" if n_ph is not None else f"|E_s|={amp:g}")
        members.append(Member(k, drive, derive_seed(sim.seed, k), label, n_ph))
    return ExperimentConfig(params, drive_base, sim, welch, analysis, tuple(members),
                            cfg["output_dir"], tuple(cfg["formats"]), cfg["workers"], cfg)


def _member_amplitude(entry, params, physical, k):
    keys = [key for key in ("ils_amplitude_scaled", "ils_amplitude_sqrt_photons_per_s",
                            "n_photons", "ils_power_dbm") if key in entry]
    if len(keys) != 1:
        raise ConfigError(f"sweep[{k}] must give exactly one ILS strength, got {keys}")
    key = keys[0]
    value = entry[key]
    if key == "ils_amplitude_scaled":
        if physical:
            raise ConfigError(f"sweep[{k}]: ils_amplitude_scaled needs scaled resonator units")
        return value, None
    if key == "n_photons":
        # unit-agnostic: sqrt(kappa_ext)|E_s| = kappa_tot sqrt(N_p)/2
        return calib.ils_amplitude_for_photon_number(value, params), value
    if not physical:
        raise ConfigError(f"sweep[{k}]: {key} needs physical resonator units")
    if key == "ils_power_dbm":
        p_s = calib.dbm_to_watts(value)
        return calib.ils_amplitude_from_power(p_s, params), calib.photon_number(p_s, params)
    return value, None
