"""Uniform geographic grid: the bijection between map cells and raster pixels.

A grid covers a closed lon/lat bounding box with ``rows`` x ``cols`` equal
cells. Row 0 is the northernmost band (image convention), column 0 the
westernmost. Points exactly on the east/south boundary clamp into the last
cell so the closed box is fully covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class GridError(ValueError):
    """Raised for invalid grid definitions, coordinates, or cell indices."""


@dataclass(frozen=True)
class GridSpec:
    """Bounding box (degrees) plus the cell resolution of the mesh."""

    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if not self.lon_min < self.lon_max:
            raise GridError(f"lon_min must be < lon_max, got [{self.lon_min}, {self.lon_max}]")
        if not self.lat_min < self.lat_max:
            raise GridError(f"lat_min must be < lat_max, got [{self.lat_min}, {self.lat_max}]")
        if self.rows < 1 or self.cols < 1:
            raise GridError(f"grid dims must be >= 1, got {self.rows}x{self.cols}")

    @property
    def cell_width(self) -> float:
        return (self.lon_max - self.lon_min) / self.cols

    @property
    def cell_height(self) -> float:
        return (self.lat_max - self.lat_min) / self.rows

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class CellIndex:
    """One mesh cell, equivalently one raster pixel."""

    row: int
    col: int

    def __post_init__(self) -> None:
        if self.row < 0 or self.col < 0:
            raise GridError(f"cell index must be non-negative, got ({self.row}, {self.col})")


def cell_of(lon: float, lat: float, grid: GridSpec) -> CellIndex:
    """Map a coordinate inside the bounding box to its cell.

    col = floor((lon - lon_min) / cell_width), row counted from the north:
    row = floor((lat_max - lat) / cell_height). Max-boundary points clamp
    to the last row/column.
    """
    if not (grid.lon_min <= lon <= grid.lon_max):
        raise GridError(f"longitude {lon} outside [{grid.lon_min}, {grid.lon_max}]")
    if not (grid.lat_min <= lat <= grid.lat_max):
        raise GridError(f"latitude {lat} outside [{grid.lat_min}, {grid.lat_max}]")
    col = min(int(math.floor((lon - grid.lon_min) / grid.cell_width)), grid.cols - 1)
    row = min(int(math.floor((grid.lat_max - lat) / grid.cell_height)), grid.rows - 1)
    return CellIndex(row=row, col=col)


def cell_center(idx: CellIndex, grid: GridSpec) -> tuple[float, float]:
    """Geometric center (lon, lat) of a cell; inverse of cell_of up to quantization."""
    if idx.row >= grid.rows or idx.col >= grid.cols:
        raise GridError(f"cell ({idx.row}, {idx.col}) outside {grid.rows}x{grid.cols} grid")
    lon = grid.lon_min + (idx.col + 0.5) * grid.cell_width
    lat = grid.lat_max - (idx.row + 0.5) * grid.cell_height
    return (lon, lat)
