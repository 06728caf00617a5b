"""Ingestion of geolocated time-series records into dense per-window grids.

Every modality arrives as timestamped (lon, lat, value) records, gets binned
into half-open time windows [start + t*len, start + (t+1)*len) and grid cells,
and comes out as a dense (T, rows, cols) series. A seeded synthetic generator
stands in for the live precipitation / congestion / tweet feeds and carries a
real cross-modal signal: congestion follows recent rain on a road network,
tweet counts follow congestion.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Mapping

import numpy as np

from .geogrid import CellIndex, GridError, GridSpec, cell_center, cell_of

AGGREGATORS = ("mean", "sum", "count", "max")

# Synthetic generator constants (artifact values, not measurements):
# congestion(t) = AR_COEF * congestion(t-1) + RAIN_COEF * precip(t - RAIN_LAG) + noise
AR_COEF = 0.6
RAIN_COEF = 0.3
RAIN_LAG = 1
CONGESTION_NOISE_STD = 0.2
RAIN_TEMPORAL_RHO = 0.85
RAIN_SMOOTH_SIGMA = 1.5
RAIN_SMOOTH_RADIUS = 3
RAIN_THRESHOLD = 0.4
RAIN_SCALE = 8.0
TWEET_GAIN = 0.5
TWEET_BASE = 0.05
ROAD_SPACING = 8

DEFAULT_WINDOW_START = int(datetime(2019, 7, 1, tzinfo=timezone.utc).timestamp())
DEFAULT_WINDOW_LENGTH = 3600


class IngestError(ValueError):
    """Raised for malformed input records or invalid aggregation requests."""


def parse_timestamp(text: str) -> int:
    """ISO-8601 UTC timestamp -> epoch seconds (naive values assumed UTC)."""
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(t)
    except ValueError as exc:
        raise IngestError(f"unparseable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ModalityRecord:
    """One observation: UTC epoch seconds, position in degrees, finite value."""

    timestamp: int
    lon: float
    lat: float
    value: float


@dataclass
class ModalitySeries:
    """Dense per-window, per-cell values for one modality, pre-quantization."""

    name: str
    grid: GridSpec
    window_start: int
    window_length: int
    frames: np.ndarray  # (T, rows, cols) float64

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise IngestError(f"frames must be (T, rows, cols) with T >= 1, got {self.frames.shape}")
        if self.frames.shape[1:] != self.grid.shape:
            raise IngestError(
                f"frame dims {self.frames.shape[1:]} do not match grid {self.grid.shape}"
            )
        if self.window_length <= 0:
            raise IngestError(f"window_length must be positive, got {self.window_length}")
        if not np.all(np.isfinite(self.frames)):
            raise IngestError(f"series {self.name!r} contains non-finite values")

    @property
    def n_windows(self) -> int:
        return self.frames.shape[0]

    def window_start_of(self, t: int) -> int:
        return self.window_start + t * self.window_length


_FIELDS = ("timestamp", "lon", "lat", "value")


def parse_records(
    source: str | os.PathLike | IO[bytes] | IO[str],
    schema: Mapping[str, str] | None = None,
) -> list[ModalityRecord]:
    """Parse the documented CSV layout (header ``timestamp,lon,lat,value``).

    ``schema`` optionally remaps field names to differently named columns.
    Malformed lines raise IngestError carrying the 1-based file line number;
    an empty file yields an empty list.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            return parse_records(f, schema)
    if isinstance(source.read(0), bytes):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")

    columns = {name: (schema or {}).get(name, name) for name in _FIELDS}
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return []
    header = [h.strip() for h in header]
    positions = {}
    for name, col in columns.items():
        if col not in header:
            raise IngestError(f"line 1: missing column {col!r} in header {header}")
        positions[name] = header.index(col)

    records: list[ModalityRecord] = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) <= max(positions.values()):
            raise IngestError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            ts = parse_timestamp(row[positions["timestamp"]])
            lon = float(row[positions["lon"]])
            lat = float(row[positions["lat"]])
            value = float(row[positions["value"]])
        except (IngestError, ValueError) as exc:
            raise IngestError(f"line {line}: {exc}") from exc
        if not np.isfinite(value):
            raise IngestError(f"line {line}: non-finite value {value!r}")
        records.append(ModalityRecord(timestamp=ts, lon=lon, lat=lat, value=value))
    return records


def aggregate(
    records: Iterable[ModalityRecord],
    grid: GridSpec,
    window_start: int,
    window_length: int,
    n_windows: int,
    how: str = "mean",
    name: str = "",
) -> tuple[ModalitySeries, int]:
    """Bin records into (window, cell) and reduce with the chosen aggregator.

    Records outside the time range or bounding box are skipped, not errors;
    the skip count is returned alongside. Cells with no records hold 0.
    """
    if n_windows < 1:
        raise IngestError(f"n_windows must be >= 1, got {n_windows}")
    if window_length <= 0:
        raise IngestError(f"window_length must be positive, got {window_length}")
    if how not in AGGREGATORS:
        raise IngestError(f"unknown aggregator {how!r}, expected one of {AGGREGATORS}")

    shape = (n_windows, grid.rows, grid.cols)
    sums = np.zeros(shape)
    counts = np.zeros(shape)
    maxs = np.full(shape, -np.inf)
    skipped = 0
    for rec in records:
        w = (rec.timestamp - window_start) // window_length
        if not 0 <= w < n_windows:
            skipped += 1
            continue
        try:
            idx = cell_of(rec.lon, rec.lat, grid)
        except GridError:
            skipped += 1
            continue
        sums[w, idx.row, idx.col] += rec.value
        counts[w, idx.row, idx.col] += 1.0
        maxs[w, idx.row, idx.col] = max(maxs[w, idx.row, idx.col], rec.value)

    hit = counts > 0
    if how == "mean":
        frames = np.divide(sums, counts, out=np.zeros(shape), where=hit)
    elif how == "sum":
        frames = sums
    elif how == "count":
        frames = counts
    else:
        frames = np.where(hit, maxs, 0.0)
    series = ModalitySeries(
        name=name, grid=grid, window_start=window_start, window_length=window_length, frames=frames
    )
    return series, skipped


def road_mask(grid: GridSpec) -> np.ndarray:
    """Fixed road network for the synthetic world: a regular street raster.

    Deterministic in the grid dims alone; tiny grids fall back to a single
    central row/column so the mask is never empty.
    """
    rows = [r for r in range(grid.rows) if r % ROAD_SPACING == ROAD_SPACING // 2] or [grid.rows // 2]
    cols = [c for c in range(grid.cols) if c % ROAD_SPACING == ROAD_SPACING // 2] or [grid.cols // 2]
    mask = np.zeros(grid.shape, dtype=bool)
    mask[rows, :] = True
    mask[:, cols] = True
    return mask


def _smooth(frames: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    """Separable Gaussian blur over the two spatial axes, reflect-padded."""
    offsets = np.arange(-radius, radius + 1)
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    taps /= taps.sum()
    out = frames
    for axis in (1, 2):
        padded = np.pad(out, [(0, 0) if a != axis else (radius, radius) for a in range(3)], mode="reflect")
        acc = np.zeros_like(out)
        for i, w in enumerate(taps):
            sl = [slice(None)] * 3
            sl[axis] = slice(i, i + out.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return out


def gen_synthetic(
    grid: GridSpec,
    T: int,
    seed: int,
    window_start: int = DEFAULT_WINDOW_START,
    window_length: int = DEFAULT_WINDOW_LENGTH,
) -> tuple[ModalitySeries, ModalitySeries, ModalitySeries]:
    """Generate correlated (precipitation, congestion, tweets) series.

    Precipitation is a smooth thresholded random field with temporal
    persistence; congestion on the road mask follows
    ``AR_COEF * c(t-1) + RAIN_COEF * p(t-RAIN_LAG) + noise`` and is
    structurally zero off the mask; tweets are Poisson counts with rate
    ``TWEET_GAIN * max(c, 0) + TWEET_BASE``. Deterministic for a fixed seed.
    """
    if T < 4:
        raise IngestError(f"synthetic generation needs T >= 4, got {T}")
    rng = np.random.default_rng(seed)
    shape = (T, grid.rows, grid.cols)

    # Temporally AR(1), spatially smoothed latent field, thresholded to rain.
    eps = rng.standard_normal(shape)
    latent = np.empty(shape)
    latent[0] = eps[0]
    decay = np.sqrt(1.0 - RAIN_TEMPORAL_RHO**2)
    for t in range(1, T):
        latent[t] = RAIN_TEMPORAL_RHO * latent[t - 1] + decay * eps[t]
    latent = _smooth(latent, RAIN_SMOOTH_SIGMA, RAIN_SMOOTH_RADIUS)
    std = latent.std()
    latent /= std if std > 0 else 1.0
    precip = RAIN_SCALE * np.maximum(latent - RAIN_THRESHOLD, 0.0)

    mask = road_mask(grid)
    noise = rng.standard_normal(shape)
    congestion = np.zeros(shape)
    for t in range(1, T):
        congestion[t] = (
            AR_COEF * congestion[t - 1]
            + RAIN_COEF * precip[t - RAIN_LAG]
            + CONGESTION_NOISE_STD * noise[t]
        )
        congestion[t] *= mask

    lam = TWEET_GAIN * np.maximum(congestion, 0.0) + TWEET_BASE
    tweets = rng.poisson(lam).astype(np.float64)

    def series(name: str, frames: np.ndarray) -> ModalitySeries:
        return ModalitySeries(
            name=name,
            grid=grid,
            window_start=window_start,
            window_length=window_length,
            frames=frames,
        )

    return series("precipitation", precip), series("congestion", congestion), series("tweets", tweets)


def series_to_records(series: ModalitySeries) -> list[ModalityRecord]:
    """Sparse record dump of a series: one record per nonzero (window, cell).

    Timestamps sit mid-window and positions at cell centers, so aggregating
    the records with ``mean`` over the same grid reproduces the series.
    """
    records: list[ModalityRecord] = []
    for t in range(series.n_windows):
        ts = series.window_start_of(t) + series.window_length // 2
        frame = series.frames[t]
        for row, col in zip(*np.nonzero(frame)):
            lon, lat = cell_center(CellIndex(int(row), int(col)), series.grid)
            records.append(ModalityRecord(timestamp=ts, lon=lon, lat=lat, value=float(frame[row, col])))
    return records
