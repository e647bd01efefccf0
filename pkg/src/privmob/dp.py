"""Differential-privacy primitives: noise, selection, and budget accounting.

The Laplace mechanism adds noise with density ``p(x) = exp(-|x|/b) / (2b)``;
releasing a sensitivity-``d`` quantity at scale ``b = d / eps`` is
``eps``-differentially private.  The exponential mechanism selects a candidate
``r`` with probability proportional to ``exp(eps * q(r) / (2 * delta_q))``.
Sequential composition adds budgets; post-processing is free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RandomSource:
    """Reproducible randomness split into independent numbered streams.

    Two sources with the same ``(seed, stream)`` produce identical draws;
    distinct stream ids give statistically independent sequences, so
    experiment repeats can be parallelised without sharing state.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        self._generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))
        )

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def substream(self, offset: int) -> RandomSource:
        """Independent source derived from this one's ids; does not advance self."""
        return RandomSource(seed=self.seed, stream=(self.stream + 1) * 1_000_003 + offset)

    def uniform(self, size=None):
        return self._generator.random(size)

    def integers(self, low: int, high: int, size=None):
        return self._generator.integers(low, high, size=size)


def sample_laplace(scale: float, rng: RandomSource, size=None):
    """Draw Laplace(0, scale) noise by inverting the CDF.

    With ``u`` uniform on (-1/2, 1/2], the draw is
    ``-scale * sign(u) * log(1 - 2|u|)``.
    """
    if not (scale > 0 and math.isfinite(scale)):
        raise ValueError(f"Laplace scale must be positive and finite, got {scale}")
    u = rng.generator.random(size) - 0.5
    # u == -0.5 would take log(0); clamp to the smallest positive float.
    inner = np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(float).tiny)
    draw = -scale * np.sign(u) * np.log(inner)
    if size is None:
        return float(draw)
    return draw


def exponential_select(scores: np.ndarray, epsilon: float, delta_q: float, rng: RandomSource) -> int:
    """Pick an index with probability proportional to exp(eps * q / (2 * delta_q)).

    Weights are computed in log space with the max shifted out, so huge or
    tiny scores cannot overflow.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a non-empty 1-d array")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must all be finite")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if delta_q <= 0:
        raise ValueError(f"delta_q must be > 0, got {delta_q}")
    logits = (epsilon / (2.0 * delta_q)) * scores
    logits -= logits.max()
    weights = np.exp(logits)
    probs = weights / weights.sum()
    u = rng.generator.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, scores.size - 1))


def selection_probabilities(scores: np.ndarray, epsilon: float, delta_q: float) -> np.ndarray:
    """The distribution exponential_select draws from; useful for audits."""
    scores = np.asarray(scores, dtype=float)
    logits = (epsilon / (2.0 * delta_q)) * scores
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


@dataclass
class PrivacyBudget:
    """Ledger for one publication run.

    ``allocations`` names the planned sub-budgets (selection, direct part,
    threshold part, ...); ``charge`` records what each stage actually spent.
    ``consumed`` must never exceed ``epsilon_total``.
    """

    epsilon_total: float
    allocations: dict[str, float] = field(default_factory=dict)
    charges: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (self.epsilon_total > 0 and math.isfinite(self.epsilon_total)):
            raise ValueError(f"epsilon_total must be positive and finite, got {self.epsilon_total}")
        for name, value in self.allocations.items():
            if value < 0:
                raise ValueError(f"allocation {name!r} must be >= 0, got {value}")

    @property
    def consumed(self) -> float:
        # fsum keeps the ledger exact: stage charges are constructed so their
        # true sum is the run's epsilon, and fsum rounds that sum correctly.
        return math.fsum(amount for _, amount in self.charges)

    @property
    def remaining(self) -> float:
        return self.epsilon_total - self.consumed

    def charge(self, label: str, amount: float) -> None:
        if amount < 0:
            raise ValueError(f"cannot charge negative budget {amount} for {label!r}")
        projected = math.fsum([amt for _, amt in self.charges] + [amount])
        if projected > self.epsilon_total * (1 + 1e-12):
            raise ValueError(
                f"budget overrun: charging {amount} for {label!r} would consume "
                f"{projected} of {self.epsilon_total}"
            )
        self.charges.append((label, amount))

    def charge_remaining_of(self, label: str, cap: float) -> None:
        """Charge whatever is left of ``cap`` after existing charges.

        Used for a final release that tops a mechanism up to exactly its
        granted budget.  The plain subtraction can leave the rounded ledger
        sum one float step past the cap, so the amount is nudged by ulps
        until the sum lands on the cap bit for bit.
        """
        amount = cap - self.consumed
        if amount < 0:
            raise ValueError(f"nothing left of {cap} to charge for {label!r}")
        existing = [amt for _, amt in self.charges]
        while amount > 0 and math.fsum(existing + [amount]) > cap:
            amount = math.nextafter(amount, -math.inf)
        while math.fsum(existing + [amount]) < cap:
            amount = math.nextafter(amount, math.inf)
        if amount < 0:
            raise ValueError(f"nothing left of {cap} to charge for {label!r}")
        self.charges.append((label, amount))

    def assert_within(self) -> None:
        if self.consumed > self.epsilon_total * (1 + 1e-12):
            raise AssertionError(
                f"privacy budget exceeded: consumed {self.consumed} of {self.epsilon_total}"
            )


def split_budget(epsilon_total: float, fractions: dict[str, float]) -> PrivacyBudget:
    """Budget with named allocations ``fraction * epsilon_total``.

    Fractions must be non-negative and sum to 1.  The largest allocation
    absorbs the float residual so the allocations sum to ``epsilon_total``
    exactly, which keeps downstream ledgers exact.
    """
    if not fractions:
        raise ValueError("fractions must not be empty")
    for name, f in fractions.items():
        if f < 0:
            raise ValueError(f"fraction {name!r} must be >= 0, got {f}")
    total = math.fsum(fractions.values())
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"fractions must sum to 1, got {total}")
    allocations = {name: f * epsilon_total for name, f in fractions.items()}
    largest = max(allocations, key=lambda k: allocations[k])
    residual = epsilon_total - math.fsum(allocations.values())
    allocations[largest] += residual
    return PrivacyBudget(epsilon_total=epsilon_total, allocations=allocations)
