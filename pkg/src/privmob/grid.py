"""Uniform spatial grid over a lon/lat region.

Coordinates are projected onto a local equirectangular plane anchored at the
grid origin, then binned into square cells of ``cell_size_m`` metres.  Cell
indices are row-major: ``index = row * cols + col`` with rows growing
northward and columns growing eastward.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

EARTH_RADIUS_M = 6_371_000.0

# Sentinel index for records falling outside the grid extent.  Kept as a
# value (not an exception) so callers can count and report them.
OUT_OF_BOUNDS = -1


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the aggregation grid."""

    origin_lon: float
    origin_lat: float
    cell_size_m: float
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.origin_lon) and math.isfinite(self.origin_lat)):
            raise ValueError("grid origin must be finite")
        if self.cell_size_m <= 0:
            raise ValueError(f"cell_size_m must be > 0, got {self.cell_size_m}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must have at least one cell, got {self.rows}x{self.cols}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def to_local_m(self, lon: float, lat: float) -> tuple[float, float]:
        """Project lon/lat to metres east/north of the origin."""
        x = math.radians(lon - self.origin_lon) * EARTH_RADIUS_M * math.cos(math.radians(self.origin_lat))
        y = math.radians(lat - self.origin_lat) * EARTH_RADIUS_M
        return x, y

    def to_lon_lat(self, x_m: float, y_m: float) -> tuple[float, float]:
        lon = self.origin_lon + math.degrees(x_m / (EARTH_RADIUS_M * math.cos(math.radians(self.origin_lat))))
        lat = self.origin_lat + math.degrees(y_m / EARTH_RADIUS_M)
        return lon, lat


def map_to_cell(grid: GridSpec, lon: float, lat: float) -> int:
    """Map a coordinate to its row-major cell index.

    Returns ``OUT_OF_BOUNDS`` for points outside the grid extent instead of
    dropping them silently; non-finite coordinates are rejected outright.
    """
    if not (math.isfinite(lon) and math.isfinite(lat)):
        raise ValueError(f"rejected record: non-finite coordinates ({lon}, {lat})")
    x, y = grid.to_local_m(lon, lat)
    col = math.floor(x / grid.cell_size_m)
    row = math.floor(y / grid.cell_size_m)
    if col < 0 or col >= grid.cols or row < 0 or row >= grid.rows:
        return OUT_OF_BOUNDS
    return row * grid.cols + col


def cell_centroid(grid: GridSpec, cell: int) -> tuple[float, float]:
    """Lon/lat of the centre of ``cell``.  Inverse of map_to_cell up to binning."""
    if cell < 0 or cell >= grid.n_cells:
        raise ValueError(f"cell {cell} outside grid with {grid.n_cells} cells")
    row, col = divmod(cell, grid.cols)
    x = (col + 0.5) * grid.cell_size_m
    y = (row + 0.5) * grid.cell_size_m
    return grid.to_lon_lat(x, y)


def cell_row_col(grid: GridSpec, cell: int) -> tuple[int, int]:
    return divmod(cell, grid.cols)


def write_grid(grid: GridSpec, path: str | Path) -> None:
    payload = {
        "origin_lon": grid.origin_lon,
        "origin_lat": grid.origin_lat,
        "cell_size_m": grid.cell_size_m,
        "rows": grid.rows,
        "cols": grid.cols,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_grid(path: str | Path) -> GridSpec:
    payload = json.loads(Path(path).read_text())
    return GridSpec(
        origin_lon=payload["origin_lon"],
        origin_lat=payload["origin_lat"],
        cell_size_m=payload["cell_size_m"],
        rows=payload["rows"],
        cols=payload["cols"],
    )
