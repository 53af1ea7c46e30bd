"""Batch pipelines behind the command line: potential, run, analyze, report."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import AnalysisConfig, ExperimentConfig, Member
from .dynamics import (
    LabelConfig,
    QuadratureTrace,
    histogram,
    label_states,
    simulate_trace,
)
from .errors import JPOError, MonostableError, PreconditionError
from .fitting import (
    LorentzianConfig,
    fit_lorentzian,
    fit_powerlaw,
    rate_consistency,
    rolloff_band,
)
from .potential import (
    barrier_and_asymmetry,
    cross_section,
    find_stationary_points,
    minima,
    well_location,
    write_cross_section_csv,
    write_stationary_points_json,
)
from .spectra import WelchConfig, diagonalize, noise_covariance, read_spectra_csv, write_spectra_csv
from .svg import PALETTE, Plot
from .traceio import load_any, read_trace, write_histogram_csv, write_trace

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
MANIFEST_VERSION = 1
TRACE_FILE = "trace.bin"
STRIP_SECONDS = 15e-3
# bins averaged for the reported low-frequency level (DC excluded)
LOW_FREQ_BINS = 16


class RunDirError(JPOError, OSError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# ----------------------------------------------------------------- analysis

def analyze_trace(trace: QuadratureTrace, welch: WelchConfig, analysis: AnalysisConfig,
                  q_ref: float, out_dir: Path, formats) -> dict:
    """Label, histogram, spectra and fits for one trace; writes member artifacts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rule = LabelConfig.symmetric(q_ref, analysis.label_fraction)
    stats = label_states(trace, rule)
    hist = histogram(trace, "I", analysis.histogram_bins)
    spectra = diagonalize(noise_covariance(trace, welch), analysis.carrier_angle_rad)
    band = spectra.interior()
    f, s_aa = spectra.frequencies[band], spectra.s_aa[band]
    low_level = float(np.mean(s_aa[:LOW_FREQ_BINS]))
    fit_record = {"low_frequency_level": low_level,
                  "low_frequency_band_hz": [float(f[0]), float(f[min(LOW_FREQ_BINS, f.size) - 1])]}
    lor = None
    try:
        lor = fit_lorentzian(f, s_aa, config=LorentzianConfig(analysis.lorentzian_confidence))
        fit_record["lorentzian"] = lor.as_record()
    except JPOError as exc:
        fit_record["lorentzian"] = None
        fit_record["lorentzian_error"] = str(exc)
    fit_record["powerlaw"] = None
    if lor is not None and lor.accepted:
        rb = rolloff_band(lor)
        if rb is not None:
            try:
                fit_record["powerlaw"] = fit_powerlaw(f, s_aa, rb).as_record()
            except JPOError as exc:
                fit_record["powerlaw_error"] = str(exc)
    try:
        fit_record["rate_consistency"] = (
            rate_consistency(stats, lor, analysis.rate_tolerance).as_record() if lor else None)
    except PreconditionError as exc:
        fit_record["rate_consistency"] = None
        fit_record["rate_consistency_error"] = str(exc)
    fit_record["config"] = {"welch": asdict(welch), "analysis": asdict(analysis), "q_ref": q_ref}
    stats_record = stats.as_record()
    stats_record["label_thresholds"] = [rule.lower, rule.upper]

    if "csv" in formats:
        write_histogram_csv(out_dir / "histogram.csv", hist)
        write_spectra_csv(out_dir / "spectra.csv", spectra, analysis.db_reference)
    if "json" in formats:
        dump_json(out_dir / "stats.json", stats_record)
        dump_json(out_dir / "fit.json", fit_record)
    return {
        "switch_count": stats.switch_count,
        "switching_rate": stats.switching_rate,
        "occupation": list(stats.occupation),
        "low_frequency_level": low_level,
        "lorentzian_accepted": bool(lor.accepted) if lor else False,
        "rolloff_exponent": fit_record["powerlaw"]["exponent"] if fit_record["powerlaw"] else None,
    }


# ----------------------------------------------------------------- potential

def cmd_potential(cfg: ExperimentConfig, out_dir=None) -> dict:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    curves = []
    for m in cfg.members:
        qs = well_location(cfg.resonator, m.drive)
        grid = np.linspace(-2.0 * qs, 2.0 * qs, 401)
        curve = cross_section(cfg.resonator, m.drive, grid)
        curves.append((m, curve))
        points = find_stationary_points(cfg.resonator, m.drive)
        mdir = out / f"member_{m.index:03d}"
        mdir.mkdir(exist_ok=True)
        if "csv" in cfg.formats:
            write_cross_section_csv(mdir / "cross_section.csv", curve)
        if "json" in cfg.formats:
            write_stationary_points_json(mdir / "stationary_points.json", points)
        rec = m.as_record()
        rec["deepest_well_energy"] = min(p.energy for p in minima(points))
        try:
            rep = barrier_and_asymmetry(cfg.resonator, m.drive)
            rec.update(monostable=False, splitting=rep.well_energy_splitting,
                       barriers=list(rep.barrier_from_each_well))
        except MonostableError as exc:
            rec.update(monostable=True, splitting=None, barriers=None, note=str(exc))
        records.append(rec)
    report = {"members": records}
    if "json" in cfg.formats:
        dump_json(out / "potential_report.json", report)
    if "svg" in cfg.formats:
        plot = Plot("U(q_x, 0)", "q_x", "U")
        for m, curve in curves:
            plot.add(curve[:, 0], curve[:, 1], m.label)
        plot.save(out / "potential.svg")
    return report


# ----------------------------------------------------------------- run

def _run_member(cfg: ExperimentConfig, member: Member, out: Path) -> dict:
    mdir = out / f"member_{member.index:03d}"
    mdir.mkdir(parents=True, exist_ok=True)
    rec = member.as_record()
    try:
        sim = replace(cfg.sim, seed=member.seed)
        trace = simulate_trace(cfg.resonator, member.drive, sim)
        write_trace(mdir / TRACE_FILE, trace, member.seed)
        q_ref = cfg.analysis.label_threshold_scaled or well_location(cfg.resonator, member.drive)
        rec["summary"] = analyze_trace(trace, cfg.welch, cfg.analysis, q_ref, mdir, cfg.formats)
        rec["status"] = "ok"
    except JPOError as exc:
        log.warning("member %d failed: %s", member.index, exc)
        rec["status"] = "failed"
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _file_index(root: Path) -> dict:
    files = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name != MANIFEST:
            files[path.relative_to(root).as_posix()] = sha256(path)
    return files


def cmd_run(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Simulate and analyse every sweep member, then write the manifest."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if cfg.workers > 1 and len(cfg.members) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_member, cfg, m, out) for m in cfg.members]
            records = [f.result() for f in futures]
    else:
        records = [_run_member(cfg, m, out) for m in cfg.members]
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": "jpolock",
        "versions": {"jpolock": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "config": cfg.raw,
        "base_seed": cfg.sim.seed,
        "members": records,
        "wall_time_s": time.perf_counter() - start,
        "files": _file_index(out),
    }
    dump_json(out / MANIFEST, manifest)
    return manifest


# ----------------------------------------------------------------- analyze

def _collect_inputs(inputs):
    traces = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            found = sorted(path.glob(f"member_*/{TRACE_FILE}"))
            if not found:
                raise RunDirError(f"{path}: no member traces found")
            traces.extend((p.parent.name, p) for p in found)
        else:
            traces.append((path.stem, path))
    return traces


def cmd_analyze(inputs, welch: WelchConfig, analysis: AnalysisConfig, out_dir,
                formats=("csv", "json")) -> list:
    """Run spectra and fits on existing trace files or run directories."""
    out = Path(out_dir)
    results = []
    for name, path in _collect_inputs(inputs):
        trace = load_any(path)
        q_ref = analysis.label_threshold_scaled or float(np.median(np.abs(trace.i_samples)))
        if not q_ref > 0:
            q_ref = 1.0
        summary = analyze_trace(trace, welch, analysis, q_ref, out / name, formats)
        results.append({"name": name, "source": str(path), "summary": summary})
    out.mkdir(parents=True, exist_ok=True)
    if "json" in formats:
        dump_json(out / "analysis.json", {"traces": results})
    return results


# ----------------------------------------------------------------- report

def _guide_lines(f_lo, f_hi, anchor_level):
    f = np.logspace(math.log10(f_lo), math.log10(f_hi), 50)
    return {"1/f": anchor_level * (f_lo / f), "1/f^2": anchor_level * (f_lo / f) ** 2}, f


def cmd_report(run_dir, out_dir=None, formats=("csv", "json", "svg")) -> dict:
    """Figure bundle: 15 ms trace strips, histograms and the phase-noise PSD overlay."""
    run = Path(run_dir)
    manifest_path = run / MANIFEST
    if not manifest_path.is_file():
        raise RunDirError(f"{run}: not a completed run directory (no {MANIFEST})")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    members = manifest.get("members") or []
    if not members:
        raise RunDirError(f"{run}: manifest lists no members")
    out = Path(out_dir) if out_dir else run / "report"
    out.mkdir(parents=True, exist_ok=True)

    gaps, strips, hists, psds = [], [], [], []
    for k, m in enumerate(members):
        mdir = run / f"member_{m['index']:03d}"
        label = m.get("label", f"member {m['index']}")
        try:
            trace = read_trace(mdir / TRACE_FILE)
            n = min(len(trace), max(2, int(round(STRIP_SECONDS * trace.sample_rate))))
            strips.append((k, label, trace.times[:n], trace.i_samples[:n]))
        except (OSError, JPOError) as exc:
            gaps.append({"member": m["index"], "artifact": TRACE_FILE, "error": str(exc)})
        try:
            h = np.loadtxt(mdir / "histogram.csv", delimiter=",", skiprows=1, ndmin=2)
            hists.append((k, label, h[:, 0], h[:, 1]))
        except (OSError, ValueError) as exc:
            gaps.append({"member": m["index"], "artifact": "histogram.csv", "error": str(exc)})
        try:
            sp = read_spectra_csv(mdir / "spectra.csv")
            sl = sp.interior()
            psds.append((k, label, sp.frequencies[sl], sp.s_aa[sl]))
        except (OSError, ValueError) as exc:
            gaps.append({"member": m["index"], "artifact": "spectra.csv", "error": str(exc)})

    if "csv" in formats:
        with open(out / "traces.csv", "w") as fh:
            fh.write("member,t,i\n")
            for k, _, t, i in strips:
                for a, b in zip(t, i):
                    fh.write(f"{k},{float(a)!r},{float(b)!r}\n")
        with open(out / "histograms.csv", "w") as fh:
            fh.write("member,bin_center,count\n")
            for k, _, c, n in hists:
                for a, b in zip(c, n):
                    fh.write(f"{k},{float(a)!r},{int(b)}\n")
        with open(out / "psd.csv", "w") as fh:
            fh.write("member,freq_hz,s_aa\n")
            for k, _, f, s in psds:
                for a, b in zip(f, s):
                    fh.write(f"{k},{float(a)!r},{float(b)!r}\n")
    guides = None
    if psds:
        f_all = np.concatenate([p[2] for p in psds])
        f_lo, f_hi = float(f_all.min()), float(f_all.max())
        anchor = float(np.max([np.median(p[3][:LOW_FREQ_BINS]) for p in psds]))
        guides, fg = _guide_lines(f_lo, f_hi, anchor)
        if "csv" in formats:
            with open(out / "guides.csv", "w") as fh:
                fh.write("guide,freq_hz,level\n")
                for name, level in guides.items():
                    for a, b in zip(fg, level):
                        fh.write(f"{name},{float(a)!r},{float(b)!r}\n")
    if "svg" in formats:
        plot = Plot("I quadrature, first 15 ms", "t (s)", "I (scaled)")
        for k, label, t, i in strips:
            plot.add(t, i, label, color=PALETTE[k % len(PALETTE)])
        plot.save(out / "traces.svg")
        plot = Plot("Histograms of I", "I (scaled)", "count")
        for k, label, c, n in hists:
            plot.add(c, n, label, color=PALETTE[k % len(PALETTE)])
        plot.save(out / "histograms.svg")
        plot = Plot("Phase noise PSD", "frequency (Hz)", "S_aa (1/Hz)", xlog=True, ylog=True)
        for k, label, f, s in psds:
            plot.add(f, s, label, color=PALETTE[k % len(PALETTE)])
        if guides is not None:
            for name, level in guides.items():
                plot.add(fg, level, name, color="#555555", dashed=True)
        plot.save(out / "psd.svg")
    report = {"run_dir": str(run), "members_plotted": [p[0] for p in psds],
              "labels": [p[1] for p in psds], "gaps": gaps}
    if "json" in formats:
        dump_json(out / "report.json", report)
    return report
