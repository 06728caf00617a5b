"""Collaborative fusion: three modalities quantized to bytes and packed as RGB.

Each modality series is normalized into [0, 255] against its own global
value bounds and becomes one color plane; stacking the fused frames along
time yields a raster video. Quantization is round-half-up, so encoding is
monotone (brighter pixel = larger value) and bit-reproducible, and decoding
recovers values to within half a quantization step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geogrid import GridSpec
from .ingest import ModalitySeries

CHANNELS = ("R", "G", "B")


class FusionError(ValueError):
    """Raised when series cannot be fused or a channel tag is invalid."""


@dataclass(frozen=True)
class ChannelMeta:
    """Name and the value bounds a channel was normalized against."""

    name: str
    vmin: float
    vmax: float

    def __post_init__(self) -> None:
        if self.vmin > self.vmax:
            raise FusionError(f"vmin {self.vmin} > vmax {self.vmax} for channel {self.name!r}")

    @property
    def degenerate(self) -> bool:
        return self.vmin == self.vmax

    @property
    def step(self) -> float:
        """Physical spacing between adjacent byte levels."""
        return (self.vmax - self.vmin) / 255.0


@dataclass
class RasterVideo:
    """Time-ordered H x W x 3 byte frames plus dequantization metadata."""

    frames: np.ndarray  # (T, rows, cols, 3) uint8
    grid: GridSpec
    window_start: int
    window_length: int
    meta: tuple[ChannelMeta, ChannelMeta, ChannelMeta]

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.uint8)
        if self.frames.ndim != 4 or self.frames.shape[3] != 3 or self.frames.shape[0] < 1:
            raise FusionError(f"frames must be (T, rows, cols, 3) with T >= 1, got {self.frames.shape}")
        if self.frames.shape[1:3] != self.grid.shape:
            raise FusionError(
                f"frame dims {self.frames.shape[1:3]} do not match grid {self.grid.shape}"
            )
        if self.window_length <= 0:
            raise FusionError(f"window_length must be positive, got {self.window_length}")
        if len(self.meta) != 3:
            raise FusionError(f"expected 3 channel metadata entries, got {len(self.meta)}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def channel_plane(self, channel: str) -> np.ndarray:
        """Raw byte plane (T, rows, cols) of one channel."""
        return self.frames[:, :, :, channel_index(channel)]


def channel_index(channel: str) -> int:
    if channel not in CHANNELS:
        raise FusionError(f"unknown channel {channel!r}, expected one of {CHANNELS}")
    return CHANNELS.index(channel)


def channel_stats(series: ModalitySeries) -> ChannelMeta:
    """Global min/max over all frames of the series, as quantization bounds."""
    return ChannelMeta(
        name=series.name, vmin=float(series.frames.min()), vmax=float(series.frames.max())
    )


def encode_array(values: np.ndarray, meta: ChannelMeta) -> np.ndarray:
    """Quantize values into bytes: floor((clamp(v) - vmin) / range * 255 + 0.5)."""
    if meta.degenerate:
        return np.zeros(np.shape(values), dtype=np.uint8)
    v = np.clip(values, meta.vmin, meta.vmax)
    scaled = (v - meta.vmin) / (meta.vmax - meta.vmin) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def decode_array(bytes_: np.ndarray, meta: ChannelMeta) -> np.ndarray:
    """Dequantize bytes back to physical values: vmin + b/255 * range."""
    if meta.degenerate:
        return np.full(np.shape(bytes_), meta.vmin)
    return meta.vmin + np.asarray(bytes_, dtype=np.float64) / 255.0 * (meta.vmax - meta.vmin)


def encode_value(v: float, meta: ChannelMeta) -> int:
    return int(encode_array(np.float64(v), meta))


def decode_value(b: int, meta: ChannelMeta) -> float:
    return float(decode_array(np.float64(b), meta))


def fuse(r: ModalitySeries, g: ModalitySeries, b: ModalitySeries) -> RasterVideo:
    """Pack three aligned series into a raster video, one per color channel."""
    ref = r
    for other, tag in ((g, "G"), (b, "B")):
        if other.grid != ref.grid:
            raise FusionError(f"channel {tag} grid {other.grid.shape} != R grid {ref.grid.shape}")
        if other.n_windows != ref.n_windows:
            raise FusionError(f"channel {tag} has {other.n_windows} windows, R has {ref.n_windows}")
        if (other.window_start, other.window_length) != (ref.window_start, ref.window_length):
            raise FusionError(
                f"channel {tag} windows ({other.window_start}, {other.window_length}) "
                f"misaligned with R ({ref.window_start}, {ref.window_length})"
            )
    metas = tuple(channel_stats(s) for s in (r, g, b))
    planes = [encode_array(s.frames, m) for s, m in zip((r, g, b), metas)]
    frames = np.stack(planes, axis=-1)
    return RasterVideo(
        frames=frames,
        grid=ref.grid,
        window_start=ref.window_start,
        window_length=ref.window_length,
        meta=metas,
    )


def extract_channel(video: RasterVideo, channel: str) -> ModalitySeries:
    """Dequantize one channel back into a physical-unit series."""
    i = channel_index(channel)
    meta = video.meta[i]
    return ModalitySeries(
        name=meta.name,
        grid=video.grid,
        window_start=video.window_start,
        window_length=video.window_length,
        frames=decode_array(video.frames[:, :, :, i], meta),
    )
