"""Utility metrics comparing a published series against the raw one.

Per timestamp: mean absolute error over cells, and mean relative error with
the denominator floored at ``gamma`` to keep empty cells from blowing up.
The relative-error denominator defaults to the true count; ``denominator="noisy"``
divides by the published value instead, for compatibility with reports that
define it that way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import AggregatedSeries

DEFAULT_GAMMA = 0.001


def _as_float_pair(raw: AggregatedSeries, noisy: AggregatedSeries) -> tuple[np.ndarray, np.ndarray]:
    if raw.counts.shape != noisy.counts.shape:
        raise ValueError(
            f"series shape mismatch: {raw.counts.shape} vs {noisy.counts.shape}"
        )
    return np.asarray(raw.counts, dtype=float), np.asarray(noisy.counts, dtype=float)


def mae(raw: AggregatedSeries, noisy: AggregatedSeries) -> np.ndarray:
    """Per-timestamp mean absolute error; aggregate with ``.mean()``."""
    r, n = _as_float_pair(raw, noisy)
    return np.abs(r - n).mean(axis=1)


def mre(
    raw: AggregatedSeries,
    noisy: AggregatedSeries,
    gamma: float = DEFAULT_GAMMA,
    denominator: str = "true",
) -> np.ndarray:
    """Per-timestamp mean relative error with denominator max(gamma, count)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if denominator not in ("true", "noisy"):
        raise ValueError(f"denominator must be 'true' or 'noisy', got {denominator!r}")
    r, n = _as_float_pair(raw, noisy)
    base = r if denominator == "true" else np.abs(n)
    return (np.abs(r - n) / np.maximum(gamma, base)).mean(axis=1)


@dataclass
class UtilityReport:
    """Scores for one published series, plus the knobs that produced it."""

    scheme: str
    epsilon: float
    threshold: float | None
    seed: int
    per_timestamp_mae: np.ndarray = field(repr=False)
    per_timestamp_mre: np.ndarray = field(repr=False)
    gamma: float = DEFAULT_GAMMA

    @property
    def mae(self) -> float:
        return float(np.mean(self.per_timestamp_mae))

    @property
    def mre(self) -> float:
        return float(np.mean(self.per_timestamp_mre))


def utility_report(
    raw: AggregatedSeries,
    noisy: AggregatedSeries,
    scheme: str = "",
    epsilon: float = float("nan"),
    threshold: float | None = None,
    seed: int = 0,
    gamma: float = DEFAULT_GAMMA,
    mre_denominator: str = "true",
) -> UtilityReport:
    return UtilityReport(
        scheme=scheme,
        epsilon=epsilon,
        threshold=threshold,
        seed=seed,
        per_timestamp_mae=mae(raw, noisy),
        per_timestamp_mre=mre(raw, noisy, gamma=gamma, denominator=mre_denominator),
        gamma=gamma,
    )
