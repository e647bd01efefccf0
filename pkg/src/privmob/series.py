"""Time series of per-cell population histograms, and how raw records become one.

An :class:`AggregatedSeries` holds an ``(S, M)`` matrix: S timestamps, M grid
cells, entry ``counts[t, m]`` = number of users in cell ``m`` during bucket
``t``.  Raw counts are integers; perturbed series hold reals.  Neighbouring
inputs differ by one user's entire trajectory, so each per-timestamp histogram
changes by at most 1 in a single cell.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import OUT_OF_BOUNDS, GridSpec, map_to_cell

logger = logging.getLogger(__name__)

RECORDS_HEADER = ["user_id", "time", "lon", "lat"]


@dataclass(frozen=True)
class TrajectoryRecord:
    """One raw location fix."""

    user_id: str
    time: float  # seconds
    lon: float
    lat: float


@dataclass
class TrajectoryDataset:
    """Per-user cell sequences on a common time axis; the attack ground truth."""

    user_ids: list[str]
    cells: np.ndarray  # (N, S) int cell indices

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if self.cells.ndim != 2:
            raise ValueError("cells must be a 2-d array of shape (n_users, n_timestamps)")
        if len(self.user_ids) != self.cells.shape[0]:
            raise ValueError("user_ids length does not match cells rows")

    @property
    def n_users(self) -> int:
        return self.cells.shape[0]

    @property
    def n_timestamps(self) -> int:
        return self.cells.shape[1]


@dataclass
class AggregatedSeries:
    """Sequence of aligned population histograms."""

    counts: np.ndarray  # (S, M)
    interval_s: float = 3600.0
    timestamps: list[str] = field(default_factory=list)
    grid: GridSpec | None = None

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2:
            raise ValueError("counts must be a 2-d array of shape (n_timestamps, n_cells)")
        if self.interval_s <= 0:
            raise ValueError(f"interval_s must be > 0, got {self.interval_s}")
        if not self.timestamps:
            self.timestamps = [f"t{i:02d}" for i in range(self.counts.shape[0])]
        if len(self.timestamps) != self.counts.shape[0]:
            raise ValueError("timestamps length does not match counts rows")

    @property
    def n_timestamps(self) -> int:
        return self.counts.shape[0]

    @property
    def n_cells(self) -> int:
        return self.counts.shape[1]

    def is_integral(self) -> bool:
        if np.issubdtype(self.counts.dtype, np.integer):
            return True
        return bool(np.all(np.isfinite(self.counts)) and np.all(self.counts == np.round(self.counts)))

    def slice_t(self, start: int, end: int) -> AggregatedSeries:
        """Sub-series for 1-based inclusive timestamp range [start, end]."""
        if not (1 <= start <= end <= self.n_timestamps):
            raise ValueError(f"invalid timestamp range [{start}, {end}] for S={self.n_timestamps}")
        return replace(
            self,
            counts=self.counts[start - 1 : end].copy(),
            timestamps=self.timestamps[start - 1 : end],
        )

    def copy(self) -> AggregatedSeries:
        return replace(self, counts=self.counts.copy(), timestamps=list(self.timestamps))


def l1_distance(a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance between two histograms of equal length."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"histogram length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).sum())


def adjacent_distances(series: AggregatedSeries) -> np.ndarray:
    """L1 distances between consecutive histograms; length S-1."""
    d = np.abs(np.diff(np.asarray(series.counts, dtype=float), axis=0)).sum(axis=1)
    return d


def mean_adjacent_distance(series: AggregatedSeries) -> float:
    """Average consecutive-histogram distance; the usual basis for thresholds."""
    if series.n_timestamps < 2:
        return 0.0
    return float(np.mean(adjacent_distances(series)))


def aggregate(
    records: list[TrajectoryRecord],
    grid: GridSpec,
    interval_s: float,
    horizon_s: float,
) -> tuple[AggregatedSeries, TrajectoryDataset]:
    """Bucket raw records into per-cell histograms and per-user cell sequences.

    Buckets are ``floor((time - t0) / interval_s)`` with ``t0`` the earliest
    record time.  Within a bucket the latest record wins; gaps are filled with
    the user's previous cell.  Users with nothing before their first covered
    bucket join the histograms from that bucket on, but only fully covered
    users enter the returned :class:`TrajectoryDataset`.
    """
    if interval_s <= 0:
        raise ValueError("interval_s must be > 0")
    if horizon_s < interval_s:
        raise ValueError("horizon_s must cover at least one bucket")
    if not records:
        raise ValueError("cannot aggregate an empty record list")

    n_buckets = int(horizon_s // interval_s)
    t0 = min(r.time for r in records)

    # user -> bucket -> (time, order, cell); latest record per bucket wins.
    per_user: dict[str, dict[int, tuple[float, int, int]]] = {}
    n_oob = 0
    n_out_of_horizon = 0
    for order, rec in enumerate(records):
        offset = rec.time - t0
        if offset < 0 or offset >= horizon_s:
            n_out_of_horizon += 1
            continue
        bucket = int(offset // interval_s)
        if bucket >= n_buckets:
            n_out_of_horizon += 1
            continue
        cell = map_to_cell(grid, rec.lon, rec.lat)
        if cell == OUT_OF_BOUNDS:
            n_oob += 1
            continue
        slot = per_user.setdefault(rec.user_id, {})
        prev = slot.get(bucket)
        if prev is None or (rec.time, order) > (prev[0], prev[1]):
            slot[bucket] = (rec.time, order, cell)

    if n_oob:
        logger.warning("aggregate: %d records fell outside the grid and were excluded", n_oob)
    if n_out_of_horizon:
        logger.warning("aggregate: %d records fell outside the horizon and were excluded", n_out_of_horizon)
    if not per_user:
        raise ValueError("no records remained after bounds filtering; nothing to aggregate")

    counts = np.zeros((n_buckets, grid.n_cells), dtype=np.int64)
    covered_ids: list[str] = []
    covered_cells: list[np.ndarray] = []
    for user_id in sorted(per_user):
        buckets = per_user[user_id]
        first = min(buckets)
        cells = np.full(n_buckets, OUT_OF_BOUNDS, dtype=np.int64)
        current = buckets[first][2]
        for b in range(first, n_buckets):
            if b in buckets:
                current = buckets[b][2]
            cells[b] = current
            counts[b, current] += 1
        if first == 0:
            covered_ids.append(user_id)
            covered_cells.append(cells)

    series = AggregatedSeries(counts=counts, interval_s=interval_s, grid=grid)
    if covered_ids:
        dataset = TrajectoryDataset(user_ids=covered_ids, cells=np.stack(covered_cells))
    else:
        dataset = TrajectoryDataset(user_ids=[], cells=np.zeros((0, n_buckets), dtype=np.int64))
    return series, dataset


# ---------------------------------------------------------------------------
# File formats.  All are plain CSV, written deterministically so identical
# inputs produce identical bytes.
# ---------------------------------------------------------------------------


def _format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_series(series: AggregatedSeries, path: str | Path) -> None:
    """Serialize a series as a header line ``S,M,interval_s`` plus S count rows."""
    lines = [f"{series.n_timestamps},{series.n_cells},{_format_value(series.interval_s)}"]
    integral = np.issubdtype(series.counts.dtype, np.integer)
    for row in series.counts:
        if integral:
            lines.append(",".join(str(int(v)) for v in row))
        else:
            lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_series(path: str | Path, grid: GridSpec | None = None) -> AggregatedSeries:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ValueError(f"empty series file: {path}")
    header = text[0].split(",")
    if len(header) != 3:
        raise ValueError(f"malformed series header in {path}: {text[0]!r}")
    n_t, n_m = int(header[0]), int(header[1])
    interval_s = float(header[2])
    body = text[1:]
    if len(body) != n_t:
        raise ValueError(f"series file {path} declares {n_t} rows but has {len(body)}")
    integral = not any(("." in line or "e" in line or "E" in line) for line in body)
    dtype = np.int64 if integral else np.float64
    counts = np.empty((n_t, n_m), dtype=dtype)
    for i, line in enumerate(body):
        vals = line.split(",")
        if len(vals) != n_m:
            raise ValueError(f"series file {path} row {i} has {len(vals)} cells, expected {n_m}")
        counts[i] = [int(v) if integral else float(v) for v in vals]
    return AggregatedSeries(counts=counts, interval_s=interval_s, grid=grid)


def write_records(records: list[TrajectoryRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORDS_HEADER)
        for rec in records:
            writer.writerow([rec.user_id, _format_value(rec.time), _format_value(rec.lon), _format_value(rec.lat)])


def read_records(path: str | Path) -> list[TrajectoryRecord]:
    records: list[TrajectoryRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RECORDS_HEADER:
            raise ValueError(f"records file {path} must start with header {','.join(RECORDS_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"records file {path}: malformed row {row!r}")
            records.append(TrajectoryRecord(user_id=row[0], time=float(row[1]), lon=float(row[2]), lat=float(row[3])))
    return records


def write_trajectories(dataset: TrajectoryDataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id"] + [f"t{i:02d}" for i in range(dataset.n_timestamps)])
        for uid, cells in zip(dataset.user_ids, dataset.cells):
            writer.writerow([uid] + [str(int(c)) for c in cells])


def read_trajectories(path: str | Path) -> TrajectoryDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "user_id":
            raise ValueError(f"trajectory file {path} must start with a user_id header")
        user_ids: list[str] = []
        rows: list[list[int]] = []
        for row in reader:
            if not row:
                continue
            user_ids.append(row[0])
            rows.append([int(v) for v in row[1:]])
    if not user_ids:
        raise ValueError(f"trajectory file {path} has no rows")
    return TrajectoryDataset(user_ids=user_ids, cells=np.asarray(rows, dtype=np.int64))


def series_equal(a: AggregatedSeries, b: AggregatedSeries) -> bool:
    return (
        a.counts.shape == b.counts.shape
        and bool(np.array_equal(a.counts, b.counts))
        and math.isclose(a.interval_s, b.interval_s, rel_tol=0, abs_tol=0)
    )
