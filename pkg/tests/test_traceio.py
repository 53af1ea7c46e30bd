import struct

import numpy as np
import pytest

from jpolock.dynamics import Histogram, QuadratureTrace
from jpolock.errors import TraceFormatError
from jpolock.traceio import (HEADER, MAGIC, load_any, read_trace, read_trace_csv,
                             write_histogram_csv, write_trace, write_trace_csv)


@pytest.fixture
def trace(rng):
    return QuadratureTrace(1e6, rng.normal(size=1000), rng.normal(size=1000), {"seed": 77})


def test_binary_round_trip(trace, tmp_path):
    p = tmp_path / "t.bin"
    write_trace(p, trace)
    raw = p.read_bytes()
    assert len(raw) == 64 + 16 * 1000
    magic, version, fs, count, seed = HEADER.unpack_from(raw)
    assert (magic, version, fs, count, seed) == (MAGIC, 1, 1e6, 1000, 77)
    assert raw[34:64] == bytes(30)
    back = read_trace(p)
    np.testing.assert_array_equal(back.i_samples, trace.i_samples)
    np.testing.assert_array_equal(back.q_samples, trace.q_samples)
    assert back.metadata["seed"] == 77
    # interleaved little-endian pairs
    first = struct.unpack_from("<dd", raw, 64)
    assert first == (trace.i_samples[0], trace.q_samples[0])


def test_external_file_in_documented_layout(tmp_path):
    # written by hand, without the package writer
    body = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], dtype="<f8")
    head = b"JPOTRACE" + struct.pack("<H", 1) + struct.pack("<d", 250.0) + \
        struct.pack("<Q", 3) + struct.pack("<Q", 5) + bytes(30)
    (tmp_path / "x.bin").write_bytes(head + body.tobytes())
    tr = read_trace(tmp_path / "x.bin")
    assert tr.sample_rate == 250.0 and list(tr.q_samples) == [2.0, 4.0, 6.0]


def test_truncated_file(trace, tmp_path):
    p = tmp_path / "t.bin"
    write_trace(p, trace)
    p.write_bytes(p.read_bytes()[:-40])
    with pytest.raises(TraceFormatError, match=r"expected 1000 samples.*found 997\.5 samples"):
        read_trace(p)


def test_bad_magic_and_header(trace, tmp_path):
    p = tmp_path / "t.bin"
    write_trace(p, trace)
    raw = bytearray(p.read_bytes())
    raw[0:8] = b"NOTTRACE"
    p.write_bytes(bytes(raw))
    with pytest.raises(TraceFormatError, match="offset 0"):
        read_trace(p)
    p.write_bytes(b"JPO")
    with pytest.raises(TraceFormatError, match="truncated"):
        read_trace(p)
    raw[0:8] = MAGIC
    raw[8:10] = struct.pack("<H", 9)
    p.write_bytes(bytes(raw))
    with pytest.raises(TraceFormatError, match="offset 8"):
        read_trace(p)


def test_csv_round_trip(trace, tmp_path):
    p = tmp_path / "t.csv"
    write_trace_csv(p, trace)
    assert p.read_text().splitlines()[0] == "t,i,q"
    back = read_trace_csv(p)
    assert back.sample_rate == pytest.approx(1e6)
    np.testing.assert_array_equal(back.i_samples, trace.i_samples)
    assert load_any(p).sample_rate == pytest.approx(1e6)


def test_csv_rejects_irregular(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,i,q\n0,1,2\n1,1,2\n3,1,2\n")
    with pytest.raises(TraceFormatError, match="uniformly"):
        read_trace_csv(p)


def test_histogram_csv(tmp_path):
    h = Histogram(np.array([0.0, 1.0, 2.0]), np.array([3, 4]))
    write_histogram_csv(tmp_path / "h.csv", h)
    assert (tmp_path / "h.csv").read_text().splitlines() == ["bin_center,count", "0.5,3", "1.5,4"]
