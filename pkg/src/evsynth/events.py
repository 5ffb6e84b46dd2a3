"""Core event types: events, streams, sensor model, slicing and on-disk formats.

An event stream is stored as parallel numpy arrays (x, y, t, p) rather than a
list of objects; all operations are pure and never mutate their inputs.
Timestamps are integer microseconds.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

MAGIC = b"EVST"
FORMAT_VERSION = 1

POLARITY_SIGNED = "signed"
POLARITY_NONE = "none"

# one record: x u16, y u16, t u64, polarity i8, 3 pad bytes
_RECORD_DTYPE = np.dtype(
    [("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "<i1"), ("pad", "V3")]
)


class Event(NamedTuple):
    x: int
    y: int
    t: int
    polarity: int | None


@dataclass(frozen=True)
class SensorModel:
    """Contrast-camera parameters: threshold C, per-pixel jitter, noise rate."""

    contrast_threshold: float = 0.2
    threshold_sigma: float = 0.0
    background_rate: float = 0.0  # events / pixel / second
    log_epsilon: float = 1e-3  # added before log of [0,1] intensity

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise ValueError("contrast_threshold must be > 0")
        if self.threshold_sigma < 0:
            raise ValueError("threshold_sigma must be >= 0")
        if self.background_rate < 0:
            raise ValueError("background_rate must be >= 0")
        if self.log_epsilon <= 0:
            raise ValueError("log_epsilon must be > 0")


@dataclass(frozen=True)
class EventStream:
    """Sensor-bounded event sequence with non-decreasing timestamps.

    ``p`` holds +1/-1 in signed mode and 0 in polarity-free mode.
    """

    width: int
    height: int
    polarity_mode: str = POLARITY_SIGNED
    x: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    t: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, np.int8))

    def __post_init__(self):
        if self.polarity_mode not in (POLARITY_SIGNED, POLARITY_NONE):
            raise ValueError(f"unknown polarity_mode {self.polarity_mode!r}")
        object.__setattr__(self, "x", np.asarray(self.x, np.int64))
        object.__setattr__(self, "y", np.asarray(self.y, np.int64))
        object.__setattr__(self, "t", np.asarray(self.t, np.int64))
        object.__setattr__(self, "p", np.asarray(self.p, np.int8))
        n = len(self.x)
        if not (len(self.y) == len(self.t) == len(self.p) == n):
            raise ValueError("x, y, t, p must have equal length")

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, i: int) -> Event:
        pol = None if self.polarity_mode == POLARITY_NONE else int(self.p[i])
        return Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), pol)

    def events(self):
        return [self[i] for i in range(len(self))]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


def stream_from_events(width, height, events, polarity_mode=POLARITY_SIGNED):
    """Build a stream from (x, y, t, polarity) tuples; polarity may be None."""
    xs, ys, ts, ps = [], [], [], []
    for e in events:
        xs.append(e[0])
        ys.append(e[1])
        ts.append(e[2])
        pol = e[3] if len(e) > 3 else None
        ps.append(0 if pol is None else pol)
    return EventStream(width, height, polarity_mode,
                       np.array(xs, np.int64), np.array(ys, np.int64),
                       np.array(ts, np.int64), np.array(ps, np.int8))


def validate_stream(stream: EventStream) -> ValidationReport:
    """Check stream invariants; violations name the first offending index per rule."""
    violations = []
    t = stream.t
    if len(t) > 1:
        bad = np.nonzero(np.diff(t) < 0)[0]
        if len(bad):
            violations.append(f"non-monotone timestamp at index {bad[0] + 1}")
    in_bounds = (
        (stream.x >= 0) & (stream.x < stream.width)
        & (stream.y >= 0) & (stream.y < stream.height)
    )
    bad = np.nonzero(~in_bounds)[0]
    if len(bad):
        violations.append(f"out of bounds at index {bad[0]}")
    if stream.polarity_mode == POLARITY_SIGNED:
        bad = np.nonzero((stream.p != 1) & (stream.p != -1))[0]
        if len(bad):
            violations.append(f"invalid polarity at index {bad[0]}")
    else:
        bad = np.nonzero(stream.p != 0)[0]
        if len(bad):
            violations.append(f"polarity set in polarity-free stream at index {bad[0]}")
    return ValidationReport(ok=not violations, violations=tuple(violations))


def slice_by_time(stream: EventStream, t0: int, t1: int) -> EventStream:
    """Events with t0 <= t < t1 (half-open), order preserved."""
    if t0 > t1:
        raise ValueError(f"invalid interval [{t0}, {t1})")
    mask = (stream.t >= t0) & (stream.t < t1)
    return replace(stream, x=stream.x[mask], y=stream.y[mask],
                   t=stream.t[mask], p=stream.p[mask])


def slice_by_count(stream: EventStream, start: int, n: int) -> EventStream:
    """Exactly n consecutive events starting at index start."""
    if start < 0 or n < 0 or start + n > len(stream):
        raise ValueError(f"slice [{start}, {start + n}) out of range for length {len(stream)}")
    sl = slice(start, start + n)
    return replace(stream, x=stream.x[sl], y=stream.y[sl],
                   t=stream.t[sl], p=stream.p[sl])


def concat_streams(a: EventStream, b: EventStream) -> EventStream:
    if (a.width, a.height, a.polarity_mode) != (b.width, b.height, b.polarity_mode):
        raise ValueError("streams have incompatible geometry or polarity mode")
    return replace(a, x=np.concatenate([a.x, b.x]), y=np.concatenate([a.y, b.y]),
                   t=np.concatenate([a.t, b.t]), p=np.concatenate([a.p, b.p]))


def merge_streams(a: EventStream, b: EventStream) -> EventStream:
    """Merge two streams into timestamp order (stable: ties keep a before b)."""
    merged = concat_streams(a, b)
    order = np.argsort(merged.t, kind="stable")
    return replace(merged, x=merged.x[order], y=merged.y[order],
                   t=merged.t[order], p=merged.p[order])


def write_stream(stream: EventStream, path) -> None:
    """Binary format: 16-byte header then 16-byte little-endian records."""
    if np.any(stream.t < 0):
        raise ValueError("negative timestamps cannot be serialized (u64 field)")
    mode = 0 if stream.polarity_mode == POLARITY_SIGNED else 1
    header = MAGIC + struct.pack("<HHHB", FORMAT_VERSION, stream.width,
                                 stream.height, mode) + b"\x00" * 5
    records = np.zeros(len(stream), _RECORD_DTYPE)
    records["x"] = stream.x
    records["y"] = stream.y
    records["t"] = stream.t
    records["p"] = stream.p
    with open(path, "wb") as f:
        f.write(header)
        f.write(records.tobytes())


def read_stream(path) -> EventStream:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:4] != MAGIC:
        raise ValueError(f"{path}: not an event stream file")
    version, width, height, mode = struct.unpack("<HHHB", data[4:11])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if (len(data) - 16) % _RECORD_DTYPE.itemsize:
        raise ValueError(f"{path}: truncated record data")
    records = np.frombuffer(data[16:], _RECORD_DTYPE)
    polarity_mode = POLARITY_SIGNED if mode == 0 else POLARITY_NONE
    return EventStream(width, height, polarity_mode,
                       records["x"].astype(np.int64), records["y"].astype(np.int64),
                       records["t"].astype(np.int64), records["p"].astype(np.int8))


def write_csv(stream: EventStream, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "t", "polarity"])
        for i in range(len(stream)):
            w.writerow([stream.x[i], stream.y[i], stream.t[i], stream.p[i]])


def read_csv(path, width, height, polarity_mode=POLARITY_SIGNED) -> EventStream:
    xs, ys, ts, ps = [], [], [], []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            xs.append(int(row["x"]))
            ys.append(int(row["y"]))
            ts.append(int(row["t"]))
            ps.append(int(row["polarity"]))
    return EventStream(width, height, polarity_mode,
                       np.array(xs, np.int64), np.array(ys, np.int64),
                       np.array(ts, np.int64), np.array(ps, np.int8))
