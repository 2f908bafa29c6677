import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonstat.core import (
    DEFAULT_REP_PERIOD_PS,
    FormatError,
    UnsupportedModeError,
    ValidationError,
    bin_intensity,
    micro_times,
    read_stream,
    write_stream,
)
from photonstat.sim import EmitterModel, simulate

from conftest import MS, S, make_stream


def _psph_bytes(records, rep=400_000, channels=2, version=1, magic=b"PSPH"):
    head = struct.pack("<4sHHQQ", magic, version, channels, rep, len(records))
    return head + b"".join(struct.pack("<BQ", c, t) for c, t in records)


def test_read_binary_three_records(tmp_path):
    path = tmp_path / "a.psph"
    path.write_bytes(_psph_bytes([(0, 10), (1, 20), (0, 30)]))
    s = read_stream(path)
    assert len(s) == 3
    assert s.rep_period_ps == 400_000
    assert s.channels.tolist() == [0, 1, 0]
    assert s.times.tolist() == [10, 20, 30]


def test_read_tsv_cw(tmp_path):
    path = tmp_path / "a.tsv"
    path.write_text("# rep_period_ps=0\n0\t100\n1\t250\n0\t900\n")
    s = read_stream(path)
    assert len(s) == 3 and s.rep_period_ps == 0 and not s.pulsed
    assert s.times.tolist() == [100, 250, 900]


def test_non_monotonic_byte_edit_reports_record_1(tmp_path):
    data = bytearray(_psph_bytes([(0, 1000), (1, 2000), (0, 3000)]))
    # rewrite t_abs of record 1 (header 24 + 9 bytes + channel byte)
    data[24 + 9 + 1 : 24 + 18] = struct.pack("<Q", 5)
    path = tmp_path / "bad.psph"
    path.write_bytes(bytes(data))
    with pytest.raises(ValidationError) as exc:
        read_stream(path)
    assert exc.value.index == 1


def test_unknown_channel_rejected(tmp_path):
    path = tmp_path / "bad.psph"
    path.write_bytes(_psph_bytes([(0, 1), (3, 2)]))
    with pytest.raises(ValidationError) as exc:
        read_stream(path)
    assert exc.value.index == 1


@pytest.mark.parametrize(
    "blob, offset",
    [
        (_psph_bytes([], magic=b"XXXX"), 0),
        (_psph_bytes([], version=9), 4),
        (b"PSPH\x01\x00", 6),
        (_psph_bytes([], channels=5), 6),
    ],
)
def test_malformed_header(tmp_path, blob, offset):
    path = tmp_path / "h.psph"
    path.write_bytes(blob)
    with pytest.raises(FormatError) as exc:
        read_stream(path)
    assert exc.value.offset == offset
    assert "byte offset" in str(exc.value)


def test_truncated_records(tmp_path):
    path = tmp_path / "t.psph"
    path.write_bytes(_psph_bytes([(0, 1), (1, 2)])[:-3])
    with pytest.raises(FormatError):
        read_stream(path)


@pytest.mark.parametrize("suffix", [".psph", ".tsv"])
def test_empty_round_trip(tmp_path, suffix):
    s = make_stream([], [], duration_ps=0)
    path = tmp_path / f"e{suffix}"
    write_stream(s, path)
    if suffix == ".psph":
        assert path.stat().st_size == 24
    back = read_stream(path)
    assert len(back) == 0 and back.rep_period_ps == s.rep_period_ps


def test_cw_header(tmp_path):
    s = make_stream([0, 1], [5, 6], rep_period_ps=0)
    path = tmp_path / "cw.psph"
    write_stream(s, path)
    assert struct.unpack_from("<Q", path.read_bytes(), 8)[0] == 0
    assert not read_stream(path).pulsed


def test_simulated_million_record_round_trip(tmp_path):
    model = EmitterModel(detect_efficiency=0.02, dark_rate_hz=100.0, seed=3)
    s = simulate(model, 100 * S)
    assert len(s) > 10**6
    for name in ("big.psph", "big.tsv"):
        path = tmp_path / name
        write_stream(s, path)
        assert s.same_records(read_stream(path))


def test_bin_intensity_example():
    s = make_stream([0, 0, 1], [1 * MS, 2 * MS, 3 * MS], duration_ps=20 * MS)
    assert bin_intensity(s, 10 * MS).counts.tolist() == [3, 0]


def test_trailing_partial_bin_dropped():
    s = make_stream([0, 0], [1 * MS, 25 * MS], duration_ps=25 * MS)
    tr = bin_intensity(s, 10 * MS)
    assert tr.n_bins == 2 and tr.counts.sum() == 1


def test_poisson_mean_30_counts(rng):
    span = 600 * S
    n = rng.poisson(3000 * 600)
    s = make_stream(rng.integers(0, 2, n), np.sort(rng.integers(0, span, n)), duration_ps=span)
    counts = bin_intensity(s).counts
    assert len(counts) == 60_000
    assert abs(counts.mean() - 30) < 3 * np.sqrt(30 / 60_000)


def test_off_state_bins_near_background():
    # dark counts only: 250 Hz on each detector -> 5 counts per 10 ms
    model = EmitterModel(qy_bright=0.0, qy_dim=0.0, dark_rate_hz=250.0, seed=8)
    counts = bin_intensity(simulate(model, 100 * S)).counts
    assert abs(counts.mean() - 5.0) < 3 * np.sqrt(5.0 / len(counts))


@given(
    st.lists(st.integers(0, 10**9), max_size=200),
    st.integers(10**4, 10**8),
    st.integers(0, 10**8),
    st.sampled_from([None, 0, 1]),
)
@settings(max_examples=100, deadline=None)
def test_bin_intensity_conserves_counts(times, bw, start, channel):
    times = sorted(times)
    chans = [i % 2 for i in range(len(times))]
    s = make_stream(chans, times, duration_ps=10**9)
    tr = bin_intensity(s, bw, channel_filter=channel, start_ps=start)
    t = np.asarray(times, dtype=np.int64)
    if channel is not None:
        t = t[np.asarray(chans, dtype=int) == channel]
    inside = (t >= start) & (t < start + tr.n_bins * bw)
    assert tr.counts.sum() == inside.sum()


def test_micro_time_examples():
    s = make_stream([0, 1], [400_010, 800_000], duration_ps=10**6)
    assert micro_times(s).tolist() == [10, 0]
    with pytest.raises(UnsupportedModeError):
        micro_times(make_stream([0], [5], rep_period_ps=0))


@given(st.lists(st.integers(0, 10**10), min_size=1, max_size=100), st.integers(0, 1000))
@settings(max_examples=100, deadline=None)
def test_micro_times_period_translation(times, n):
    times = sorted(times)
    a = make_stream([0] * len(times), times)
    b = make_stream([0] * len(times), [t + n * DEFAULT_REP_PERIOD_PS for t in times])
    assert np.array_equal(micro_times(a), micro_times(b))


def test_simulated_micro_time_mean():
    t0 = 3130
    model = EmitterModel(lifetime_bright_ps=10_000.0, irf_offset_ps=t0, detect_efficiency=0.02, seed=5)
    mt = micro_times(simulate(model, 60 * S))
    assert abs(mt.mean() - (10_000 + t0)) < 0.01 * (10_000 + t0)


def test_stream_is_immutable():
    s = make_stream([0, 1], [1, 2])
    with pytest.raises(ValueError):
        s.times[0] = 7
