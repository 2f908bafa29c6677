"""Photon-stream data types, file formats and intensity binning.

All times are integer picoseconds. A 600 s acquisition is 6e14 ps, well
inside int64, so no float drift accumulates over long traces.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

__all__ = [
    "PhotonStatError",
    "FormatError",
    "ValidationError",
    "UnsupportedModeError",
    "PhotonRecord",
    "PhotonStream",
    "IntensityTrace",
    "read_stream",
    "write_stream",
    "bin_intensity",
    "micro_times",
    "DEFAULT_REP_PERIOD_PS",
    "DEFAULT_BIN_WIDTH_PS",
    "DEFAULT_TRACE_PS",
]

DEFAULT_REP_PERIOD_PS = 400_000  # 2.5 MHz
DEFAULT_BIN_WIDTH_PS = 10_000_000_000  # 10 ms
DEFAULT_TRACE_PS = 600 * 10**12  # 600 s

MAGIC = b"PSPH"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHQQ")
RECORD_DTYPE = np.dtype([("channel", "u1"), ("t_abs", "<u8")])  # packed, 9 bytes


class PhotonStatError(Exception):
    """Base class for all analysis errors."""


class FormatError(PhotonStatError):
    """File content does not follow the expected grammar."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ValidationError(PhotonStatError):
    """Data violates a type invariant."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"{message} (record {index})"
        super().__init__(message)


class UnsupportedModeError(PhotonStatError):
    """Operation requires pulsed data but the stream is continuous-wave."""


class PhotonRecord(NamedTuple):
    channel: int
    t_abs: int


@dataclass(frozen=True, eq=False)
class PhotonStream:
    """Time-ordered detection records.

    Attributes:
        channels: Detector id per record (uint8, 0 or 1).
        times: Absolute arrival times in ps (int64), non-decreasing.
        rep_period_ps: Excitation period in ps, 0 for continuous-wave.
        duration_ps: Acquisition span; every time is <= duration_ps.
        meta: Free-form annotations.
    """

    channels: np.ndarray
    times: np.ndarray
    rep_period_ps: int = 0
    duration_ps: int = 0
    meta: dict = field(default_factory=dict)
    n_channels: int = 2

    def __post_init__(self):
        channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        times = np.ascontiguousarray(self.times, dtype=np.int64)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rep_period_ps", int(self.rep_period_ps))
        object.__setattr__(self, "duration_ps", int(self.duration_ps))
        channels.flags.writeable = False
        times.flags.writeable = False
        self.validate()

    def validate(self) -> None:
        if self.channels.shape != self.times.shape or self.times.ndim != 1:
            raise ValidationError("channels and times must be 1-D arrays of equal length")
        if self.rep_period_ps < 0:
            raise ValidationError(f"rep_period_ps must be >= 0, got {self.rep_period_ps}")
        if self.n_channels not in (1, 2):
            raise ValidationError(f"channel count must be 1 or 2, got {self.n_channels}")
        if len(self.times) == 0:
            return
        bad = np.flatnonzero(self.channels >= self.n_channels)
        if bad.size:
            raise ValidationError(f"unknown channel {self.channels[bad[0]]}", int(bad[0]))
        if self.times[0] < 0:
            raise ValidationError("negative arrival time", 0)
        dec = np.flatnonzero(np.diff(self.times) < 0)
        if dec.size:
            raise ValidationError("timestamps not monotonic", int(dec[0]) + 1)
        if self.times[-1] > self.duration_ps:
            raise ValidationError(
                f"arrival time {self.times[-1]} exceeds duration {self.duration_ps}",
                len(self.times) - 1,
            )

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[PhotonRecord]:
        for c, t in zip(self.channels.tolist(), self.times.tolist()):
            yield PhotonRecord(c, t)

    @property
    def pulsed(self) -> bool:
        return self.rep_period_ps > 0

    def channel_times(self, channel: int) -> np.ndarray:
        return self.times[self.channels == channel]

    def same_records(self, other: "PhotonStream") -> bool:
        return (
            np.array_equal(self.channels, other.channels)
            and np.array_equal(self.times, other.times)
            and self.rep_period_ps == other.rep_period_ps
        )


@dataclass(frozen=True, eq=False)
class IntensityTrace:
    """Photon counts in fixed-width time bins."""

    bin_width_ps: int
    counts: np.ndarray
    start_ps: int = 0

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise ValidationError(f"bin_width_ps must be > 0, got {self.bin_width_ps}")
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def bin_width_s(self) -> float:
        return self.bin_width_ps * 1e-12


def _stream_from_arrays(channels, times, rep_period_ps, n_channels, duration_ps=None, meta=None):
    times = np.asarray(times, dtype=np.int64)
    if duration_ps is None:
        duration_ps = int(times.max()) if len(times) else 0
    return PhotonStream(
        channels=channels,
        times=times,
        rep_period_ps=rep_period_ps,
        duration_ps=duration_ps,
        meta=meta or {},
        n_channels=n_channels,
    )


def _read_binary(path: Path) -> PhotonStream:
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"file shorter than {HEADER.size}-byte header", len(data))
    magic, version, n_channels, rep, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    if n_channels not in (1, 2):
        raise FormatError(f"invalid channel count {n_channels}", 6)
    expected = HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) != expected:
        raise FormatError(
            f"record count {count} implies {expected} bytes, file has {len(data)}",
            min(len(data), expected),
        )
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    if count and rec["t_abs"].max() > np.iinfo(np.int64).max:
        raise FormatError("timestamp exceeds int64 range", HEADER.size)
    return _stream_from_arrays(rec["channel"], rec["t_abs"].astype(np.int64), rep, n_channels)


def _read_tsv(path: Path) -> PhotonStream:
    meta: dict[str, str] = {}
    channels: list[int] = []
    times: list[int] = []
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh):
            line = raw.decode("utf-8").strip()
            if not line:
                pass
            elif line.startswith("#"):
                if times:
                    raise FormatError(f"metadata after records on line {lineno + 1}", offset)
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
            else:
                parts = line.split("\t")
                if len(parts) != 2:
                    raise FormatError(f"expected 'channel<TAB>t_abs_ps' on line {lineno + 1}", offset)
                try:
                    c, t = int(parts[0]), int(parts[1])
                except ValueError:
                    raise FormatError(f"non-integer field on line {lineno + 1}", offset) from None
                if c < 0 or c > 255:
                    raise ValidationError(f"unknown channel {c}", len(times))
                channels.append(c)
                times.append(t)
            offset += len(raw)
    try:
        rep = int(meta.pop("rep_period_ps", 0))
        n_channels = int(meta.pop("channels", 2))
        duration = meta.pop("duration_ps", None)
        duration = int(duration) if duration is not None else None
    except ValueError as exc:
        raise FormatError(f"bad metadata value: {exc}", 0) from None
    return _stream_from_arrays(
        np.array(channels, dtype=np.uint8),
        np.array(times, dtype=np.int64),
        rep,
        n_channels,
        duration_ps=duration,
        meta=meta,
    )


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("binary", "tsv"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    return "tsv" if path.suffix.lower() in (".tsv", ".txt") else "binary"


def read_stream(path, fmt: str | None = None) -> PhotonStream:
    """Load a photon stream from a ``.psph`` binary or TSV file.

    The format is inferred from the suffix when ``fmt`` is None. A binary
    file carries no acquisition length, so ``duration_ps`` is set to the
    last arrival time; TSV files may state it in a ``# duration_ps=`` line.
    """
    path = Path(path)
    if _infer_format(path, fmt) == "binary":
        return _read_binary(path)
    return _read_tsv(path)


def write_stream(stream: PhotonStream, path, fmt: str | None = None) -> None:
    path = Path(path)
    if _infer_format(path, fmt) == "binary":
        header = HEADER.pack(MAGIC, FORMAT_VERSION, stream.n_channels, stream.rep_period_ps, len(stream))
        rec = np.empty(len(stream), dtype=RECORD_DTYPE)
        rec["channel"] = stream.channels
        rec["t_abs"] = stream.times
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rec.tobytes())
        return
    lines = [
        f"# rep_period_ps={stream.rep_period_ps}",
        f"# duration_ps={stream.duration_ps}",
        f"# channels={stream.n_channels}",
    ]
    for key, value in stream.meta.items():
        lines.append(f"# {key}={value}")
    body = "\n".join(f"{c}\t{t}" for c, t in zip(stream.channels.tolist(), stream.times.tolist()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        if body:
            fh.write(body + "\n")


def bin_intensity(
    stream: PhotonStream,
    bin_width_ps: int = DEFAULT_BIN_WIDTH_PS,
    channel_filter: int | None = None,
    start_ps: int = 0,
) -> IntensityTrace:
    """Count photons in consecutive bins; the trailing partial bin is dropped."""
    bin_width_ps = int(bin_width_ps)
    if bin_width_ps <= 0:
        raise ValueError(f"bin_width_ps must be > 0, got {bin_width_ps}")
    times = stream.times if channel_filter is None else stream.channel_times(channel_filter)
    n_bins = max(0, (stream.duration_ps - start_ps) // bin_width_ps)
    rel = times - start_ps
    rel = rel[(rel >= 0) & (rel < n_bins * bin_width_ps)]
    counts = np.bincount(rel // bin_width_ps, minlength=n_bins).astype(np.int64)
    return IntensityTrace(bin_width_ps=bin_width_ps, counts=counts, start_ps=start_ps)


def micro_times(stream: PhotonStream) -> np.ndarray:
    """Delay of every photon after the preceding excitation pulse, in ps.

    Pulse phase is taken as zero at t_abs = 0.
    """
    if not stream.pulsed:
        raise UnsupportedModeError("micro times need a pulsed stream (rep_period_ps > 0)")
    return stream.times % stream.rep_period_ps
