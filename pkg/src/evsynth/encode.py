"""Accumulate event streams into 3-channel frame images.

Positive events go to the red channel, negative to blue; the green channel is
unused in signed mode. Per-pixel counts map to intensity by a saturating
linear rule min(count, c_max) / c_max. Polarity-free data renders white.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import POLARITY_NONE, EventStream, slice_by_count, slice_by_time
from .ppm import read_ppm, write_ppm

ENCODING_FULL = "full"
ENCODING_FIXED_COUNT = "fixed_count"
ENCODING_FIXED_INTERVAL = "fixed_interval"
ENCODING_MONO = "mono"


@dataclass(frozen=True)
class EncoderConfig:
    count_cap: int = 3  # saturating per-pixel count c_max
    polarity_mode: str = "signed"  # "signed" or "mono"

    def __post_init__(self):
        if self.count_cap < 1:
            raise ValueError("count_cap must be >= 1")
        if self.polarity_mode not in ("signed", "mono"):
            raise ValueError(f"unknown polarity_mode {self.polarity_mode!r}")


@dataclass(frozen=True)
class EventFrame:
    width: int
    height: int
    channels: np.ndarray  # (H, W, 3) in [0, 1]
    encoding: str
    encoding_param: int | None = None  # n for fixed_count, dt for fixed_interval
    source_window: tuple[int, int] | None = None

    def __post_init__(self):
        ch = np.asarray(self.channels, np.float64)
        if ch.shape != (self.height, self.width, 3):
            raise ValueError(f"channels shape {ch.shape} != ({self.height}, {self.width}, 3)")
        object.__setattr__(self, "channels", ch)


def _count_image(stream: EventStream, mask=None) -> np.ndarray:
    counts = np.zeros((stream.height, stream.width), np.int64)
    x, y = (stream.x, stream.y) if mask is None else (stream.x[mask], stream.y[mask])
    np.add.at(counts, (y, x), 1)
    return counts


def _saturate(counts: np.ndarray, c_max: int) -> np.ndarray:
    return np.minimum(counts, c_max) / float(c_max)


def encode_full(stream: EventStream, cfg: EncoderConfig,
                encoding: str = ENCODING_FULL, encoding_param=None,
                source_window=None) -> EventFrame:
    """Accumulate every event of the stream into one frame."""
    h, w = stream.height, stream.width
    channels = np.zeros((h, w, 3), np.float64)
    if cfg.polarity_mode == "mono" or stream.polarity_mode == POLARITY_NONE:
        image = _saturate(_count_image(stream), cfg.count_cap)
        channels[:] = image[..., None]
    else:
        channels[..., 0] = _saturate(_count_image(stream, stream.p > 0), cfg.count_cap)
        channels[..., 2] = _saturate(_count_image(stream, stream.p < 0), cfg.count_cap)
    return EventFrame(w, h, channels, encoding, encoding_param, source_window)


def encode_fixed_count(stream: EventStream, n: int, cfg: EncoderConfig) -> list[EventFrame]:
    """One frame per n consecutive events; the trailing remainder is dropped."""
    if n < 1:
        raise ValueError("n must be >= 1")
    frames = []
    for k in range(len(stream) // n):
        chunk = slice_by_count(stream, k * n, n)
        frames.append(encode_full(chunk, cfg, ENCODING_FIXED_COUNT, n,
                                  (k * n, (k + 1) * n)))
    return frames


def encode_fixed_interval(stream: EventStream, dt: int, cfg: EncoderConfig) -> list[EventFrame]:
    """One frame per dt-microsecond window starting at the first event.

    Empty interior windows yield all-zero frames; windows run through the
    last event's timestamp.
    """
    if dt < 1:
        raise ValueError("dt must be >= 1")
    if len(stream) == 0:
        return []
    t_start = int(stream.t[0])
    t_last = int(stream.t[-1])
    n_windows = (t_last - t_start) // dt + 1
    frames = []
    for k in range(n_windows):
        w0 = t_start + k * dt
        window = slice_by_time(stream, w0, w0 + dt)
        frames.append(encode_full(window, cfg, ENCODING_FIXED_INTERVAL, dt,
                                  (w0, w0 + dt)))
    return frames


def render_mono(stream: EventStream, cfg: EncoderConfig) -> EventFrame:
    """White-on-black location image: all three channels carry the count image."""
    image = _saturate(_count_image(stream), cfg.count_cap)
    channels = np.repeat(image[..., None], 3, axis=2)
    return EventFrame(stream.width, stream.height, channels, ENCODING_MONO)


def frame_to_tensor(frame: EventFrame) -> np.ndarray:
    """(H, W, 3) [0,1] frame -> (3, H, W) tensor in [-1, 1] for diffusion."""
    return np.transpose(frame.channels, (2, 0, 1)) * 2.0 - 1.0


def tensor_to_frame(tensor: np.ndarray, encoding: str = "generated") -> EventFrame:
    """Clamp a (3, H, W) tensor to [-1, 1] and decode back to a frame."""
    t = np.clip(np.asarray(tensor, np.float64), -1.0, 1.0)
    channels = np.transpose((t + 1.0) / 2.0, (1, 2, 0))
    return EventFrame(channels.shape[1], channels.shape[0], channels, encoding)


def write_frame(frame: EventFrame, path) -> None:
    """Persist a frame as P6 plus a plain-text sidecar with encoding metadata."""
    write_ppm(frame.channels, path)
    lines = [f"encoding {frame.encoding}"]
    if frame.encoding_param is not None:
        lines.append(f"param {frame.encoding_param}")
    if frame.source_window is not None:
        lines.append(f"window {frame.source_window[0]} {frame.source_window[1]}")
    with open(str(path) + ".meta", "w") as f:
        f.write("\n".join(lines) + "\n")


def read_frame(path) -> EventFrame:
    channels = read_ppm(path)
    encoding, param, window = "unknown", None, None
    try:
        with open(str(path) + ".meta") as f:
            for line in f:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "encoding":
                    encoding = parts[1]
                elif parts[0] == "param":
                    param = int(parts[1])
                elif parts[0] == "window":
                    window = (int(parts[1]), int(parts[2]))
    except FileNotFoundError:
        pass
    return EventFrame(channels.shape[1], channels.shape[0], channels,
                      encoding, param, window)
