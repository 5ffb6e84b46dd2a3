"""Frame-difference event simulation with threshold jitter and background noise.

Log brightness is interpolated linearly between frames; each full crossing of
the per-pixel threshold from the running reference level emits one event and
advances the reference by the threshold. Everything is deterministic given
the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .events import (POLARITY_NONE, POLARITY_SIGNED, EventStream, SensorModel,
                     merge_streams)
from .ppm import read_ppm


@dataclass(frozen=True)
class IntensitySequence:
    """Timestamped [0,1] intensity frames on a fixed sensor grid."""

    width: int
    height: int
    timestamps: np.ndarray  # microseconds, strictly increasing
    frames: np.ndarray  # (N, H, W) in [0, 1]

    def __post_init__(self):
        ts = np.asarray(self.timestamps, np.int64)
        fr = np.asarray(self.frames, np.float64)
        if fr.ndim != 3 or fr.shape[1:] != (self.height, self.width):
            raise ValueError(f"frames shape {fr.shape} != (N, {self.height}, {self.width})")
        if len(ts) != len(fr):
            raise ValueError("timestamps and frames length mismatch")
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if fr.size and (fr.min() < 0.0 or fr.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "frames", fr)


@dataclass(frozen=True)
class PixelState:
    reference_log: np.ndarray  # (H, W)
    thresholds: np.ndarray  # (H, W), all > 0

    def __post_init__(self):
        if np.any(self.thresholds <= 0):
            raise ValueError("all per-pixel thresholds must be > 0")


def sample_thresholds(sensor: SensorModel, width: int, height: int, seed: int) -> PixelState:
    """Per-pixel thresholds ~ Normal(C, sigma^2), truncated below at C/10."""
    c = sensor.contrast_threshold
    rng = np.random.default_rng(seed)
    if sensor.threshold_sigma == 0.0:
        thresholds = np.full((height, width), c)
    else:
        thresholds = rng.normal(c, sensor.threshold_sigma, (height, width))
        thresholds = np.maximum(thresholds, c / 10.0)
    return PixelState(reference_log=np.zeros((height, width)), thresholds=thresholds)


def simulate(seq: IntensitySequence, sensor: SensorModel, seed: int = 0) -> EventStream:
    """Emit one event per full threshold crossing between consecutive frames."""
    if len(seq.timestamps) < 2:
        raise ValueError("simulation needs at least 2 frames")
    h, w = seq.height, seq.width
    state = sample_thresholds(sensor, w, h, seed)
    thresholds = state.thresholds
    log_frames = np.log(seq.frames + sensor.log_epsilon)
    reference = log_frames[0].copy()

    xs, ys, ts, ps = [], [], [], []
    for i in range(1, len(seq.timestamps)):
        t0, t1 = int(seq.timestamps[i - 1]), int(seq.timestamps[i])
        l0, l1 = log_frames[i - 1], log_frames[i]
        delta = l1 - reference
        # number of full crossings this interval, signed
        k = np.where(delta >= 0,
                     np.floor(delta / thresholds),
                     -np.floor(-delta / thresholds)).astype(np.int64)
        yy, xx = np.nonzero(k != 0)
        for y, x in zip(yy, xx):
            n = int(k[y, x])
            sign = 1 if n > 0 else -1
            c_p = thresholds[y, x]
            ref = reference[y, x]
            slope = l1[y, x] - l0[y, x]
            for j in range(1, abs(n) + 1):
                level = ref + sign * j * c_p
                if slope != 0.0:
                    frac = (level - l0[y, x]) / slope
                else:
                    frac = 1.0
                frac = min(max(frac, 0.0), 1.0)
                xs.append(x)
                ys.append(y)
                ts.append(t0 + int(round(frac * (t1 - t0))))
                ps.append(sign)
        reference = reference + k * thresholds

    xs = np.array(xs, np.int64)
    ys = np.array(ys, np.int64)
    ts = np.array(ts, np.int64)
    ps = np.array(ps, np.int8)
    order = np.lexsort((ps, xs, ys, ts))  # total order for determinism
    return EventStream(w, h, POLARITY_SIGNED, xs[order], ys[order], ts[order], ps[order])


def inject_noise(stream: EventStream, sensor: SensorModel, t0: int, t1: int,
                 seed: int = 0) -> EventStream:
    """Add per-pixel Poisson background events over [t0, t1), merged in time order."""
    if t0 >= t1:
        raise ValueError(f"invalid interval [{t0}, {t1})")
    if sensor.background_rate == 0.0:
        return stream
    rng = np.random.default_rng(seed)
    duration_s = (t1 - t0) / 1e6
    lam = sensor.background_rate * duration_s
    counts = rng.poisson(lam, (stream.height, stream.width))
    total = int(counts.sum())
    yy, xx = np.nonzero(counts)
    xs = np.repeat(xx, counts[yy, xx])
    ys = np.repeat(yy, counts[yy, xx])
    ts = rng.integers(t0, t1, total)
    if stream.polarity_mode == POLARITY_NONE:
        ps = np.zeros(total, np.int8)
    else:
        ps = rng.choice(np.array([-1, 1], np.int8), total)
    order = np.argsort(ts, kind="stable")
    noise = EventStream(stream.width, stream.height, stream.polarity_mode,
                        xs[order], ys[order], ts[order], ps[order])
    return merge_streams(stream, noise)


def read_intensity_sequence(directory) -> IntensitySequence:
    """Load numbered P6 frames plus a ``timestamps.txt`` manifest.

    The manifest has one ``<filename> <timestamp_us>`` pair per line.
    """
    manifest = os.path.join(directory, "timestamps.txt")
    entries = []
    with open(manifest) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, t = line.split()
            entries.append((name, int(t)))
    if not entries:
        raise ValueError(f"{manifest}: no frames listed")
    frames = []
    for name, _ in entries:
        rgb = read_ppm(os.path.join(directory, name))
        frames.append(rgb.mean(axis=2))  # luminance as channel mean
    frames = np.stack(frames)
    h, w = frames.shape[1:]
    return IntensitySequence(w, h, np.array([t for _, t in entries], np.int64), frames)
