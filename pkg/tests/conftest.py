"""Shared builders for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from privmob.series import AggregatedSeries


def craft_series(start: int, end: int, n_timestamps: int = 20, scale: int = 50) -> AggregatedSeries:
    """Series whose population moves only between timestamps start+1 .. end.

    Outside that range consecutive histograms are identical, so the busiest
    division is exactly (start, end); inside, everyone hops between two cells
    each step.
    """
    rows: list[list[int]] = []
    cur = [scale, 0, 0]
    alt = [[0, scale, 0], [0, 0, scale]]
    for t in range(1, n_timestamps + 1):
        if start < t <= end:
            cur = alt[(t - start) % 2]
        rows.append(cur)
    return AggregatedSeries(counts=np.array(rows, dtype=np.int64))


@pytest.fixture
def three_step_series() -> AggregatedSeries:
    return AggregatedSeries(counts=np.array([[0, 2], [2, 0], [2, 0]], dtype=np.int64))
