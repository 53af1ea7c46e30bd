"""Trace and histogram persistence.

Binary layout (little endian): a 64-byte header

    offset 0   8s   magic b"JPOTRACE"
    offset 8   u16  version (1)
    offset 10  f64  sample rate, Hz
    offset 18  u64  sample count
    offset 26  u64  seed
    offset 34  30 reserved zero bytes

followed by ``count`` interleaved (I, Q) f64 pairs.
"""
from __future__ import annotations

import csv
import struct

import numpy as np

from .dynamics import Histogram, QuadratureTrace
from .errors import TraceFormatError

MAGIC = b"JPOTRACE"
VERSION = 1
HEADER = struct.Struct("<8sHdQQ30x")
assert HEADER.size == 64


def write_trace(path, trace: QuadratureTrace, seed: int | None = None) -> None:
    if seed is None:
        seed = int(trace.metadata.get("seed", 0))
    body = np.empty((len(trace), 2), dtype="<f8")
    body[:, 0] = trace.i_samples
    body[:, 1] = trace.q_samples
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, float(trace.sample_rate), len(trace), int(seed)))
        fh.write(body.tobytes())


def read_trace(path) -> QuadratureTrace:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise TraceFormatError(
            f"{path}: header truncated, expected {HEADER.size} bytes at offset 0, found {len(raw)}")
    magic, version, fs, count, seed = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TraceFormatError(f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise TraceFormatError(f"{path}: unsupported version {version} at offset 8")
    expected = HEADER.size + 16 * count
    if len(raw) != expected:
        found = (len(raw) - HEADER.size) / 16
        raise TraceFormatError(
            f"{path}: expected {count} samples ({expected} bytes), "
            f"found {found:g} samples ({len(raw)} bytes); data starts at offset {HEADER.size}")
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(count, 2)
    return QuadratureTrace(fs, body[:, 0].astype(float), body[:, 1].astype(float),
                           {"seed": int(seed), "source": str(path)})


def write_trace_csv(path, trace: QuadratureTrace) -> None:
    t = trace.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "q"])
        for row in zip(t, trace.i_samples, trace.q_samples):
            writer.writerow([repr(float(v)) for v in row])


def read_trace_csv(path) -> QuadratureTrace:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise TraceFormatError(f"{path}: {exc}") from exc
    if data.shape[1] != 3 or data.shape[0] < 2:
        raise TraceFormatError(f"{path}: expected columns t,i,q and >= 2 rows")
    dt = np.diff(data[:, 0])
    if not np.all(dt > 0) or np.ptp(dt) > 1e-6 * dt.mean():
        raise TraceFormatError(f"{path}: time column is not uniformly sampled")
    fs = 1.0 / dt.mean()
    return QuadratureTrace(fs, data[:, 1], data[:, 2], {"source": str(path)})


def load_any(path) -> QuadratureTrace:
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == MAGIC or not str(path).endswith(".csv"):
        return read_trace(path)
    return read_trace_csv(path)


def write_histogram_csv(path, hist: Histogram) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center", "count"])
        for c, n in zip(hist.centers, hist.counts):
            writer.writerow([repr(float(c)), int(n)])
