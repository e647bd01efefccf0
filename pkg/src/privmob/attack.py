"""Trajectory recovery from published aggregate histograms.

Aggregation alone does not anonymise.  Each timestamp's histogram is expanded
into location slots (cell c with count k yields k slots), and consecutive
timestamps are linked by solving a minimum-cost assignment between the
trajectories recovered so far and the next timestamp's slots.  The cost of
sending a trajectory to a slot is the negative log of an unnormalised
plausibility: a Gaussian kernel on the travel distance times a regularity
bonus for cells the trajectory has visited before.  During configured
low-mobility timestamps the kernel tightens (sigma halved) and the regularity
bonus doubles (lambda doubled).  The whole procedure is deterministic.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .grid import GridSpec
from .series import AggregatedSeries, TrajectoryDataset


@dataclass(frozen=True)
class AttackConfig:
    """Attacker model parameters.

    ``sigma`` is the travel kernel width in cell units, ``lam`` the regularity
    weight, and ``night_window`` the set of 1-based timestamps treated as
    low-mobility.
    """

    sigma: float = 5.0
    lam: float = 0.5
    night_window: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")

    def step_params(self, timestamp: int) -> tuple[float, float]:
        """Effective (sigma, lambda) for a step landing on ``timestamp`` (1-based)."""
        if timestamp in self.night_window:
            return self.sigma * 0.5, self.lam * 2.0
        return self.sigma, self.lam


@dataclass
class RecoveredTrajectorySet:
    """Candidate trajectories, one per row, aligned to the series timestamps."""

    cells: np.ndarray  # (K, S) int

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if self.cells.ndim != 2:
            raise ValueError("cells must be 2-d (n_trajectories, n_timestamps)")

    @property
    def n_trajectories(self) -> int:
        return self.cells.shape[0]

    @property
    def n_timestamps(self) -> int:
        return self.cells.shape[1]


def expand_slots(series: AggregatedSeries) -> list[np.ndarray]:
    """Per timestamp, one slot per person-count: cell c with count k appears k times.

    Requires an integral, non-negative series (i.e. post-processed output or
    raw data).  Slots are emitted in increasing cell order, which fixes a
    deterministic layout.
    """
    counts = np.asarray(series.counts)
    if not series.is_integral():
        raise ValueError("expand_slots needs integral counts; post-process the series first")
    if np.any(counts < 0):
        raise ValueError("expand_slots needs non-negative counts; post-process the series first")
    counts = counts.astype(np.int64)
    return [np.repeat(np.arange(counts.shape[1]), counts[t]) for t in range(counts.shape[0])]


def build_cost_matrix(
    prefixes: np.ndarray,
    slots: np.ndarray,
    grid: GridSpec,
    config: AttackConfig,
    timestamp: int,
) -> np.ndarray:
    """Cost of extending each prefix trajectory with each next-timestamp slot.

    ``prefixes`` is (K, t) cell indices recovered so far, ``slots`` the cell
    index of every slot at the next timestamp, and ``timestamp`` that next
    timestamp (1-based, for the night check).  Entry (k, s) is
    ``d^2 / (2 sigma^2) - log(1 + lambda * freq_k(cell_s))`` with ``d`` the
    centroid distance in cell units and ``freq_k`` the visit frequency of the
    slot's cell within prefix k.
    """
    prefixes = np.asarray(prefixes, dtype=np.int64)
    slots = np.asarray(slots, dtype=np.int64)
    if prefixes.ndim != 2 or prefixes.shape[1] < 1:
        raise ValueError("prefixes must be (n_trajectories, t>=1)")
    sigma, lam = config.step_params(timestamp)

    heads = prefixes[:, -1]
    head_rc = np.stack(divmod(heads, grid.cols), axis=1).astype(float)
    slot_rc = np.stack(divmod(slots, grid.cols), axis=1).astype(float)
    diff = head_rc[:, None, :] - slot_rc[None, :, :]
    d2 = (diff**2).sum(axis=2)

    visits = np.zeros((prefixes.shape[0], grid.n_cells), dtype=np.float64)
    np.add.at(visits, (np.arange(prefixes.shape[0])[:, None], prefixes), 1.0)
    freq = visits[:, slots] / prefixes.shape[1]

    return d2 / (2.0 * sigma**2) - np.log1p(lam * freq)


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost one-to-one assignment; returns the column chosen per row.

    The matrix must be square and finite; rectangular problems are padded by
    the caller with a constant sentinel cost, which leaves the real rows'
    optimum unchanged.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite; pad with a large sentinel instead of inf")
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(cost.shape[0], dtype=np.int64)
    out[rows] = cols
    return out


def _pad_square(cost: np.ndarray) -> np.ndarray:
    k, m = cost.shape
    if k == m:
        return cost
    sentinel = float(cost.max()) + 1.0e6 if cost.size else 1.0e6
    padded = np.full((max(k, m), max(k, m)), sentinel)
    padded[:k, :m] = cost
    return padded


def recover(
    series: AggregatedSeries,
    config: AttackConfig,
    grid: GridSpec | None = None,
) -> RecoveredTrajectorySet:
    """Reconstruct individual trajectories from an integral published series.

    The number of trajectories is the minimum slot count over timestamps;
    surplus slots at a timestamp are dropped by the assignment.  If some
    timestamp has no slots at all, recovery truncates there with a warning.
    """
    grid = grid if grid is not None else series.grid
    if grid is None:
        raise ValueError("recover needs the series grid (pass grid= or set series.grid)")
    slots = expand_slots(series)

    usable = len(slots)
    for t, slot in enumerate(slots):
        if slot.size == 0:
            usable = t
            break
    if usable < len(slots):
        warnings.warn(
            f"timestamp {usable + 1} has no occupied cells; truncating recovery to {usable} timestamps",
            stacklevel=2,
        )
    if usable == 0:
        return RecoveredTrajectorySet(cells=np.zeros((0, 0), dtype=np.int64))

    k = min(slot.size for slot in slots[:usable])
    first = slots[0]
    if first.size > k:
        # Deterministic spread over the sorted slot list.
        pick = np.round(np.linspace(0, first.size - 1, k)).astype(int)
        first = first[pick]
    trajectories = first[:, None]

    for t in range(1, usable):
        cost = build_cost_matrix(trajectories, slots[t], grid, config, timestamp=t + 1)
        assignment = solve_assignment(_pad_square(cost))[:k]
        trajectories = np.column_stack([trajectories, slots[t][assignment]])

    return RecoveredTrajectorySet(cells=trajectories)


def _match_overlap(recovered: RecoveredTrajectorySet, truth: TrajectoryDataset) -> tuple[np.ndarray, np.ndarray]:
    """Max-overlap pairing of recovered rows to true users; returns (pairs, overlap).

    A recovery truncated short of the truth is paired on its covered prefix;
    a recovery longer than the truth is a caller error.
    """
    if recovered.n_timestamps > truth.n_timestamps:
        raise ValueError(
            f"timestamp mismatch: recovered {recovered.n_timestamps}, truth {truth.n_timestamps}"
        )
    overlap = np.zeros((recovered.n_trajectories, truth.n_users), dtype=np.float64)
    for t in range(recovered.n_timestamps):
        overlap += recovered.cells[:, t : t + 1] == truth.cells[None, :, t]
    padded = _pad_square(-overlap)
    cols = solve_assignment(padded)
    pairs = [(r, int(cols[r])) for r in range(recovered.n_trajectories) if cols[r] < truth.n_users]
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2), overlap


def recovery_accuracy(recovered: RecoveredTrajectorySet, truth: TrajectoryDataset) -> float:
    """Fraction of correctly recovered timestamp cells after best pairing.

    Recovered rows carry no identity, so they are first matched to true users
    by maximising total timestamp overlap; accuracy is matched overlap divided
    by (n_trajectories * truth timestamps).  Timestamps lost to truncation
    count as wrong, so a collapsed recovery scores near zero.
    """
    if recovered.n_trajectories == 0 or recovered.n_timestamps == 0:
        return 0.0
    pairs, overlap = _match_overlap(recovered, truth)
    total = float(overlap[pairs[:, 0], pairs[:, 1]].sum()) if pairs.size else 0.0
    return total / (recovered.n_trajectories * truth.n_timestamps)


def recovery_breakdown(
    recovered: RecoveredTrajectorySet, truth: TrajectoryDataset
) -> tuple[float, np.ndarray]:
    """Accuracy plus the per-timestamp correct fraction over matched pairs.

    The per-timestamp vector spans the truth's full length; entries past a
    truncated recovery are zero.
    """
    if recovered.n_trajectories == 0 or recovered.n_timestamps == 0:
        return 0.0, np.zeros(truth.n_timestamps)
    pairs, overlap = _match_overlap(recovered, truth)
    per_t = np.zeros(truth.n_timestamps)
    if pairs.size:
        correct = recovered.cells[pairs[:, 0]] == truth.cells[pairs[:, 1], : recovered.n_timestamps]
        per_t[: recovered.n_timestamps] = correct.mean(axis=0)
    total = float(overlap[pairs[:, 0], pairs[:, 1]].sum()) if pairs.size else 0.0
    return total / (recovered.n_trajectories * truth.n_timestamps), per_t
