"""Bit-exact persistence for raster videos, plus viewable netpbm exports.

RVID container layout (all integers little-endian):

    magic           4 bytes  b"RVID"
    version         u16      currently 1
    rows, cols, T   u32 x 3
    window_start    i64      epoch seconds
    window_length   u32      seconds
    grid bounds     f64 x 4  lon_min, lon_max, lat_min, lat_max
    channel meta    3 x (u16 name length, UTF-8 name, f64 vmin, f64 vmax)
    payload         T * rows * cols * 3 raw bytes, (t, row, col, channel) order

The container is raw on purpose: predictions are compared byte-for-byte, so
any lossy or codec-dependent format would break the quantization contracts.
"""

from __future__ import annotations

import struct
from typing import IO

import numpy as np

from .fusion import ChannelMeta, RasterVideo, channel_index
from .geogrid import GridSpec

MAGIC = b"RVID"
VERSION = 1

_FIXED = struct.Struct("<4sHIIIqI4d")


class FormatError(ValueError):
    """Raised for malformed or truncated raster-video streams."""


def header_bytes(video: RasterVideo) -> bytes:
    fixed = _FIXED.pack(
        MAGIC,
        VERSION,
        video.grid.rows,
        video.grid.cols,
        video.n_frames,
        video.window_start,
        video.window_length,
        video.grid.lon_min,
        video.grid.lon_max,
        video.grid.lat_min,
        video.grid.lat_max,
    )
    parts = [fixed]
    for meta in video.meta:
        name = meta.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<dd", meta.vmin, meta.vmax))
    return b"".join(parts)


def write_rv(video: RasterVideo, sink: IO[bytes]) -> int:
    """Serialize a raster video; returns the number of bytes written."""
    header = header_bytes(video)
    payload = np.ascontiguousarray(video.frames).tobytes()
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def _read_exact(source: IO[bytes], n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise FormatError(f"truncated stream: expected {n} bytes for {what}, got {len(data)}")
    return data


def read_rv(source: IO[bytes]) -> RasterVideo:
    """Exact inverse of write_rv."""
    fixed = _read_exact(source, _FIXED.size, "header")
    (magic, version, rows, cols, n_frames, window_start, window_length,
     lon_min, lon_max, lat_min, lat_max) = _FIXED.unpack(fixed)
    if magic != MAGIC:
        raise FormatError(f"not a raster video: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unknown raster video version {version}")
    if rows < 1 or cols < 1 or n_frames < 1:
        raise FormatError(f"invalid dimensions T={n_frames}, rows={rows}, cols={cols}")

    metas = []
    for _ in range(3):
        (name_len,) = struct.unpack("<H", _read_exact(source, 2, "channel name length"))
        name = _read_exact(source, name_len, "channel name").decode("utf-8")
        vmin, vmax = struct.unpack("<dd", _read_exact(source, 16, "channel bounds"))
        metas.append(ChannelMeta(name=name, vmin=vmin, vmax=vmax))

    n_payload = n_frames * rows * cols * 3
    payload = _read_exact(source, n_payload, "payload")
    frames = np.frombuffer(payload, dtype=np.uint8).reshape(n_frames, rows, cols, 3).copy()
    grid = GridSpec(
        lon_min=lon_min, lon_max=lon_max, lat_min=lat_min, lat_max=lat_max, rows=rows, cols=cols
    )
    return RasterVideo(
        frames=frames,
        grid=grid,
        window_start=window_start,
        window_length=window_length,
        meta=(metas[0], metas[1], metas[2]),
    )


def export_pgm(video: RasterVideo, t: int, channel: str, sink: IO[bytes]) -> None:
    """Write one channel plane of frame t as a binary PGM (P5) image."""
    if not 0 <= t < video.n_frames:
        raise FormatError(f"frame index {t} out of range [0, {video.n_frames})")
    plane = video.frames[t, :, :, channel_index(channel)]
    sink.write(f"P5\n{video.grid.cols} {video.grid.rows}\n255\n".encode("ascii"))
    sink.write(np.ascontiguousarray(plane).tobytes())


def export_ppm(video: RasterVideo, t: int, sink: IO[bytes]) -> None:
    """Write the full RGB frame t as a binary PPM (P6) image."""
    if not 0 <= t < video.n_frames:
        raise FormatError(f"frame index {t} out of range [0, {video.n_frames})")
    frame = video.frames[t]
    sink.write(f"P6\n{video.grid.cols} {video.grid.rows}\n255\n".encode("ascii"))
    sink.write(np.ascontiguousarray(frame).tobytes())
