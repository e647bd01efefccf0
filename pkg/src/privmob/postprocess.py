"""Consistency post-processing for perturbed histograms.

Published histograms must look like real ones: integral, non-negative, with a
plausible total.  Each timestamp is repaired independently: round half away
from zero, zero out negatives, then take the mass those negatives carried out
of uniformly chosen positive cells one unit at a time.  The repaired total is
``max(0, sum of rounded values)``.  Everything here operates on already
published data, so it costs no privacy budget.
"""
from __future__ import annotations

import numpy as np

from .dp import RandomSource
from .series import AggregatedSeries


def _round_half_away(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def _repair_histogram(noisy: np.ndarray, rng: RandomSource) -> np.ndarray:
    rounded = _round_half_away(np.asarray(noisy, dtype=float))
    repaired = rounded.copy()
    negatives = repaired < 0
    debt = int(-repaired[negatives].sum())
    repaired[negatives] = 0
    out = repaired.astype(np.int64)
    if debt <= 0:
        return out

    # Pay the debt by decrementing cells drawn uniformly from those still
    # positive, stopping early if the histogram empties first.  Simulated as
    # an exponential-clock race: every positive cell rings at unit rate and
    # loses one unit per ring until exhausted, so each ring in time order
    # falls on a uniformly chosen still-positive cell; taking the first
    # ``debt`` rings reproduces the one-at-a-time chain exactly.
    positive = np.flatnonzero(out > 0)
    if positive.size == 0:
        return out
    values = out[positive]
    total = int(values.sum())
    take = min(debt, total)

    owners = np.repeat(np.arange(positive.size), values)
    gaps = rng.generator.exponential(1.0, size=total)
    csum = np.cumsum(gaps)
    starts = np.concatenate([[0], np.cumsum(values)[:-1]])
    ring_times = csum - np.repeat(csum[starts] - gaps[starts], values)
    victims = owners[np.argsort(ring_times, kind="stable")[:take]]
    out[positive] -= np.bincount(victims, minlength=positive.size)
    return out


def consistency_postprocess(series: AggregatedSeries, rng: RandomSource) -> AggregatedSeries:
    """Repair every timestamp of a perturbed series.

    Idempotent: repairing an already repaired series changes nothing, because
    integral non-negative histograms round to themselves and carry no debt.
    """
    if not np.all(np.isfinite(np.asarray(series.counts, dtype=float))):
        raise ValueError("cannot post-process non-finite counts")
    repaired = np.empty(series.counts.shape, dtype=np.int64)
    for t in range(series.n_timestamps):
        repaired[t] = _repair_histogram(series.counts[t], rng)
    out = series.copy()
    out.counts = repaired
    return out


def postprocess_error_delta(
    raw: AggregatedSeries, noisy: AggregatedSeries, rng: RandomSource
) -> tuple[float, float]:
    """Mean absolute error against ``raw`` before and after repair."""
    if raw.counts.shape != noisy.counts.shape:
        raise ValueError("raw and noisy series must have the same shape")
    repaired = consistency_postprocess(noisy, rng)
    before = float(np.mean(np.abs(np.asarray(noisy.counts, float) - np.asarray(raw.counts, float))))
    after = float(np.mean(np.abs(np.asarray(repaired.counts, float) - np.asarray(raw.counts, float))))
    return before, after
