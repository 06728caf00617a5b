"""rasterfusion: wrap geolocated time-series modalities into RGB raster videos
and forecast future congestion frames with a small 3D convolutional network."""

__version__ = "0.1.0"

from .geogrid import CellIndex, GridError, GridSpec, cell_center, cell_of

__all__ = [
    "CellIndex",
    "GridError",
    "GridSpec",
    "cell_center",
    "cell_of",
]
