"""Publication schemes for aggregated mobility series.

Four ways to spend a privacy budget ``eps`` on an S-timestamp series:

* ``direct_perturb``: Laplace noise at scale ``S / eps`` on every cell of
  every timestamp (sequential composition across timestamps).
* ``threshold_perturb``: a sparse-vector loop that freshly perturbs a
  timestamp only when its distance from the last release crosses a noisy
  threshold, up to ``cutoff`` fresh releases; other timestamps republish the
  previous noisy histogram for free.
* ``static_hybrid``: picks one high-movement window with the exponential
  mechanism, spends most budget perturbing it directly, and covers the
  low-movement remainder with the threshold scheme.
* ``dynamic_hybrid``: forecasts the window from historical days with a linear
  regression over each day's selected division, then perturbs the three
  segments (before / window / after) separately.

Scoring a candidate window [i, j] (1-based, inclusive) uses the mean adjacent
distance inside it divided by the mean absolute deviation of those distances,
scaled by ``log_alpha`` of the window length; both means are normalised by the
window length ``j - i + 1`` even though there are only ``j - i`` adjacent
pairs.  The deviation term is floored at 1 (and when ``i == j``), which keeps
the score's sensitivity to one user at ``2 * log_alpha(S)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dp import PrivacyBudget, RandomSource, exponential_select, sample_laplace, selection_probabilities
from .series import AggregatedSeries, adjacent_distances, l1_distance

# One user contributes one count per timestamp, so removing a whole
# trajectory moves each histogram by 1 and each adjacent distance by 2.
HISTOGRAM_SENSITIVITY = 1.0
DISTANCE_SENSITIVITY = 2.0

DEFAULT_ALPHA = 12.0


@dataclass(frozen=True)
class ThresholdParams:
    """Knobs for the threshold scheme.

    ``threshold`` is the distance above which a timestamp deserves a fresh
    perturbation, ``cutoff`` the maximum number of fresh perturbations, and
    ``rho`` the fraction of budget spent on the noisy comparisons (the rest
    perturbs the released histograms).
    """

    threshold: float
    cutoff: int
    rho: float = 0.5
    delta_d: float = DISTANCE_SENSITIVITY

    def __post_init__(self) -> None:
        if self.threshold < 0 or not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite and >= 0, got {self.threshold}")
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie strictly between 0 and 1, got {self.rho}")
        if self.delta_d <= 0:
            raise ValueError(f"delta_d must be > 0, got {self.delta_d}")


@dataclass(frozen=True)
class DynamicParams:
    """Knobs for the dynamic hybrid: one threshold, one cutoff per night leg."""

    threshold: float
    cutoff_before: int = 1
    cutoff_after: int = 1
    rho: float = 0.5
    delta_d: float = DISTANCE_SENSITIVITY

    def leg(self, cutoff: int) -> ThresholdParams:
        return ThresholdParams(
            threshold=self.threshold, cutoff=cutoff, rho=self.rho, delta_d=self.delta_d
        )


@dataclass(frozen=True)
class DivisionPoints:
    """A 1-based inclusive window [start, end] of timestamps."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if not (1 <= self.start <= self.end):
            raise ValueError(f"need 1 <= start <= end, got [{self.start}, {self.end}]")


@dataclass(frozen=True)
class DivisionScore:
    """Score of one candidate window."""

    mean_distance: float
    spread: float
    value: float


@dataclass(frozen=True)
class RegressionModel:
    """Two fitted lines t = theta0 + theta1 * day, one per window edge."""

    theta_start: tuple[float, float]
    theta_end: tuple[float, float]
    beta: float
    iterations: int

    def predict(self, day: float) -> tuple[float, float]:
        return (
            self.theta_start[0] + self.theta_start[1] * day,
            self.theta_end[0] + self.theta_end[1] * day,
        )


def _resolve_ledger(budget: PrivacyBudget | None, epsilon: float) -> PrivacyBudget:
    return budget if budget is not None else PrivacyBudget(epsilon_total=epsilon)


def _release_noise(rng: RandomSource, timestamp: int, scale: float, m: int) -> np.ndarray:
    """Laplace noise for one released histogram.

    Keyed by the global timestamp (substream 10 + t), so the same source
    yields the same underlying draws for the same timestamp no matter which
    scheme or budget is in play; sweeps then rescale noise instead of
    resampling it, and schemes can be compared as paired runs.
    """
    return sample_laplace(scale, rng.substream(10 + timestamp), size=m)


def direct_perturb(
    series: AggregatedSeries,
    epsilon: float,
    rng: RandomSource,
    budget: PrivacyBudget | None = None,
    time_offset: int = 0,
) -> AggregatedSeries:
    """Perturb every histogram with Laplace noise at scale S / epsilon.

    Splitting ``epsilon`` evenly across the S timestamps makes the whole
    release epsilon-differentially private; the ledger is charged exactly
    ``epsilon``.  ``time_offset`` shifts the noise substream keys when the
    series is a slice of a longer day.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")
    if series.n_timestamps < 1:
        raise ValueError("series must contain at least one timestamp")
    ledger = _resolve_ledger(budget, epsilon)
    scale = series.n_timestamps * HISTOGRAM_SENSITIVITY / epsilon
    raw = np.asarray(series.counts, dtype=float)
    noisy = np.empty_like(raw)
    for i in range(raw.shape[0]):
        noisy[i] = raw[i] + _release_noise(rng, time_offset + i, scale, raw.shape[1])
    ledger.charge("direct", epsilon)
    out = series.copy()
    out.counts = noisy
    return out


def threshold_perturb(
    series: AggregatedSeries,
    epsilon: float,
    params: ThresholdParams,
    rng: RandomSource,
    budget: PrivacyBudget | None = None,
    time_offsets: list[int] | None = None,
) -> AggregatedSeries:
    """Sparse-vector publication: perturb on change, republish otherwise.

    The first histogram is always released at scale ``c * delta_d / eps2``.
    After that, each timestamp's distance to the previous release is compared
    (both sides noisy) against the threshold; crossings trigger a fresh
    release and a redrawn noisy threshold, up to ``cutoff`` releases.  If the
    final timestamp arrives with budget left it is released at the remaining
    budget regardless of distance.  The ledger never exceeds ``epsilon`` and
    reaches it exactly whenever S >= 2.

    ``time_offsets`` gives each position its global timestamp for noise
    substream keying when the series is a stitched slice of a longer day.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")
    n = series.n_timestamps
    ledger = _resolve_ledger(budget, epsilon)
    if n == 0:
        return series.copy()
    offsets = list(range(n)) if time_offsets is None else list(time_offsets)
    if len(offsets) != n:
        raise ValueError(f"time_offsets has {len(offsets)} entries for {n} timestamps")

    c = min(params.cutoff, n)
    eps1 = params.rho * epsilon
    eps2 = (1.0 - params.rho) * epsilon
    release_scale = c * params.delta_d / eps2
    threshold_scale = c * params.delta_d / eps1
    distance_scale = 2.0 * c * params.delta_d / eps1

    base = ledger.consumed
    raw = np.asarray(series.counts, dtype=float)
    out = np.empty_like(raw)
    m = raw.shape[1]

    # Comparison noise sits at substream 1000 + t and threshold redraws at
    # 2000 + t, next to the per-timestamp release noise at 10 + t; a branch
    # flip at one timestamp then cannot shift the noise at any other.
    out[0] = raw[0] + _release_noise(rng, offsets[0], release_scale, m)
    fresh = 1
    # fl(eps * c) / c can round one ulp past eps, so the full cap is spelled
    # out exactly when every release has been spent.
    cap = epsilon if fresh == c else epsilon * fresh / c
    ledger.charge_remaining_of("release", base + cap)
    noisy_threshold = params.threshold + sample_laplace(
        threshold_scale, rng.substream(2000 + offsets[0])
    )

    for i in range(1, n):
        if fresh >= c:
            out[i] = out[i - 1]
            continue
        if i == n - 1:
            # Last timestamp with budget left: spend the remainder on it.
            eps_last = epsilon * (c - fresh) / c
            out[i] = raw[i] + _release_noise(rng, offsets[i], params.delta_d / eps_last, m)
            ledger.charge_remaining_of("final-release", base + epsilon)
            continue
        noisy_distance = l1_distance(out[i - 1], raw[i]) + sample_laplace(
            distance_scale, rng.substream(1000 + offsets[i])
        )
        if noisy_distance >= noisy_threshold:
            out[i] = raw[i] + _release_noise(rng, offsets[i], release_scale, m)
            fresh += 1
            cap = epsilon if fresh == c else epsilon * fresh / c
            ledger.charge_remaining_of("release", base + cap)
            noisy_threshold = params.threshold + sample_laplace(
                threshold_scale, rng.substream(2000 + offsets[i])
            )
        else:
            out[i] = out[i - 1]

    result = series.copy()
    result.counts = out
    return result


# ---------------------------------------------------------------------------
# Window scoring and selection.
# ---------------------------------------------------------------------------


def _score_from_distances(distances, i: int, j: int, alpha: float) -> DivisionScore:
    # Plain sequential sums keep the arithmetic identical to a literal
    # re-derivation, so independent checks can compare exactly.
    length = j - i + 1
    window = [float(distances[t]) for t in range(i - 1, j - 1)]
    mean_distance = sum(window) / length
    raw_spread = sum(abs(mean_distance - d) for d in window) / length
    spread = 1.0 if (i == j or raw_spread < 1.0) else raw_spread
    value = (math.log(length) / math.log(alpha)) * mean_distance / spread
    return DivisionScore(mean_distance=mean_distance, spread=spread, value=value)


def division_utility(series: AggregatedSeries, i: int, j: int, alpha: float = DEFAULT_ALPHA) -> DivisionScore:
    """Score window [i, j]: longer, busier, steadier windows score higher."""
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    if not (1 <= i <= j <= series.n_timestamps):
        raise ValueError(f"need 1 <= i <= j <= {series.n_timestamps}, got [{i}, {j}]")
    return _score_from_distances(adjacent_distances(series), i, j, alpha)


def utility_sensitivity(n_timestamps: int, alpha: float = DEFAULT_ALPHA) -> float:
    """How much one user's trajectory can move any window score."""
    if n_timestamps < 1:
        raise ValueError("n_timestamps must be >= 1")
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    return 2.0 * math.log(n_timestamps) / math.log(alpha)


def division_scores(
    series: AggregatedSeries, alpha: float = DEFAULT_ALPHA
) -> tuple[list[DivisionPoints], np.ndarray]:
    """Scores for all S(S+1)/2 candidate windows, in (start, end) order."""
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    distances = adjacent_distances(series)
    pairs: list[DivisionPoints] = []
    values: list[float] = []
    n = series.n_timestamps
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            pairs.append(DivisionPoints(start=i, end=j))
            values.append(_score_from_distances(distances, i, j, alpha).value)
    return pairs, np.asarray(values)


def division_selection_probabilities(
    series: AggregatedSeries, epsilon: float, alpha: float = DEFAULT_ALPHA
) -> tuple[list[DivisionPoints], np.ndarray]:
    """The exact distribution select_division draws from."""
    pairs, values = division_scores(series, alpha)
    if len(pairs) == 1:
        return pairs, np.ones(1)
    delta = utility_sensitivity(series.n_timestamps, alpha)
    return pairs, selection_probabilities(values, epsilon, delta)


def select_division(
    series: AggregatedSeries,
    epsilon: float,
    alpha: float = DEFAULT_ALPHA,
    rng: RandomSource | None = None,
    budget: PrivacyBudget | None = None,
) -> DivisionPoints:
    """Draw one window with the exponential mechanism; charges ``epsilon``."""
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")
    if rng is None:
        raise ValueError("select_division needs a RandomSource")
    ledger = _resolve_ledger(budget, epsilon)
    pairs, values = division_scores(series, alpha)
    if len(pairs) == 1:
        ledger.charge("select", epsilon)
        return pairs[0]
    delta = utility_sensitivity(series.n_timestamps, alpha)
    idx = exponential_select(values, epsilon, delta, rng)
    ledger.charge("select", epsilon)
    return pairs[idx]


# ---------------------------------------------------------------------------
# Hybrid schemes.
# ---------------------------------------------------------------------------


def _require_allocations(budget: PrivacyBudget, keys: tuple[str, ...]) -> list[float]:
    missing = [k for k in keys if k not in budget.allocations]
    if missing:
        raise ValueError(f"budget is missing allocations {missing}; expected {list(keys)}")
    values = [budget.allocations[k] for k in keys]
    total = math.fsum(values)
    if not math.isclose(total, budget.epsilon_total, rel_tol=1e-9, abs_tol=0.0):
        raise ValueError(
            f"allocations {dict(zip(keys, values))} sum to {total}, "
            f"expected epsilon_total={budget.epsilon_total}"
        )
    return values


def _night_positions(n: int, window: DivisionPoints) -> list[int]:
    """0-based positions outside the window, mornings first."""
    return list(range(0, window.start - 1)) + list(range(window.end, n))


def _subseries(series: AggregatedSeries, positions: list[int]) -> AggregatedSeries:
    out = series.copy()
    out.counts = np.asarray(series.counts)[positions].copy()
    out.timestamps = [series.timestamps[p] for p in positions]
    return out


def static_hybrid(
    series: AggregatedSeries,
    budget: PrivacyBudget,
    params: ThresholdParams,
    alpha: float = DEFAULT_ALPHA,
    rng: RandomSource | None = None,
) -> AggregatedSeries:
    """Select one window, perturb it directly, threshold-perturb the rest.

    Needs allocations named ``s`` (selection), ``d`` (window) and ``t``
    (remainder) summing to the total.  The two night legs are stitched into a
    single sequence for the threshold scheme, so a copy can carry across the
    morning/evening junction.  Each stage is billed its full allocation, so
    the ledger lands on exactly the total budget.
    """
    if rng is None:
        raise ValueError("static_hybrid needs a RandomSource")
    eps_s, eps_d, eps_t = _require_allocations(budget, ("s", "d", "t"))
    window = select_division(series, eps_s, alpha, rng, budget=budget)

    day = series.slice_t(window.start, window.end)
    noisy_day = direct_perturb(day, eps_d, rng, budget=budget, time_offset=window.start - 1)

    night_positions = _night_positions(series.n_timestamps, window)
    out = np.empty_like(np.asarray(series.counts, dtype=float))
    out[window.start - 1 : window.end] = noisy_day.counts
    if night_positions:
        night = _subseries(series, night_positions)
        noisy_night = threshold_perturb(
            night,
            eps_t,
            params,
            rng,
            budget=PrivacyBudget(epsilon_total=eps_t),
            time_offsets=night_positions,
        )
        out[night_positions] = noisy_night.counts
    # Bill the remainder rather than the raw allocation: summing the three
    # stage floats can land one ulp off the granted total.
    budget.charge_remaining_of("threshold", budget.epsilon_total)

    result = series.copy()
    result.counts = out
    return result


def fit_divisions(
    history: list[tuple[float, float, float]],
    beta: float = 0.02,
    iterations: int = 50_000,
) -> RegressionModel:
    """Fit window edges over days by gradient descent on squared error.

    ``history`` holds ``(day, start, end)`` rows.  Each edge gets its own line
    ``t = theta0 + theta1 * day``, updated with
    ``theta += beta * mean((t - prediction) * (1, day))`` until the update
    stalls.  Converges to the least-squares line for step sizes below
    ``2 / lambda_max`` of the feature Gram matrix; a diverging fit raises with
    a hint to lower ``beta``.
    """
    if len(history) < 2:
        raise ValueError("need at least two historical days to fit a trend")
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")

    days = np.asarray([row[0] for row in history], dtype=float)
    x = np.column_stack([np.ones_like(days), days])
    thetas: list[tuple[float, float]] = []
    for col in (1, 2):
        y = np.asarray([row[col] for row in history], dtype=float)
        theta = np.zeros(2)
        for _ in range(iterations):
            residual = y - x @ theta
            step = beta * (x.T @ residual) / len(y)
            theta = theta + step
            if not np.all(np.isfinite(theta)):
                raise ValueError(
                    f"gradient descent diverged at beta={beta}; lower the learning rate"
                )
            if np.max(np.abs(step)) <= 1e-13 * max(1.0, float(np.max(np.abs(theta)))):
                break
        thetas.append((float(theta[0]), float(theta[1])))
    return RegressionModel(theta_start=thetas[0], theta_end=thetas[1], beta=beta, iterations=iterations)


def _round_half_away(value: float) -> int:
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def dynamic_hybrid(
    history: list[AggregatedSeries],
    current: AggregatedSeries,
    budget: PrivacyBudget,
    params: DynamicParams,
    alpha: float = DEFAULT_ALPHA,
    rng: RandomSource | None = None,
    beta: float = 0.02,
    iterations: int = 50_000,
) -> AggregatedSeries:
    """Forecast today's window from history, then perturb the three segments.

    Each historical day selects its own division with the full budget; those
    selections run on disjoint days' data, so they do not charge today's
    ledger.  Today needs allocations ``d`` (window), ``t1`` (before) and
    ``t2`` (after).  If the forecast window inverts after rounding and
    clamping, the whole day falls back to direct perturbation at the full
    budget.
    """
    if rng is None:
        raise ValueError("dynamic_hybrid needs a RandomSource")
    if len(history) < 2:
        raise ValueError("need at least two historical days")
    for h, day in enumerate(history, start=1):
        if day.n_timestamps != current.n_timestamps:
            raise ValueError(f"historical day {h} has {day.n_timestamps} timestamps, current has {current.n_timestamps}")
    eps_d, eps_t1, eps_t2 = _require_allocations(budget, ("d", "t1", "t2"))

    rows: list[tuple[float, float, float]] = []
    for h, day in enumerate(history, start=1):
        chosen = select_division(day, budget.epsilon_total, alpha, rng)
        rows.append((float(h), float(chosen.start), float(chosen.end)))
    model = fit_divisions(rows, beta=beta, iterations=iterations)
    start_f, end_f = model.predict(len(history) + 1)

    n = current.n_timestamps
    start = min(max(_round_half_away(start_f), 1), n)
    end = min(max(_round_half_away(end_f), 1), n)
    if start > end:
        # Forecast collapsed; publish the whole day directly instead.
        return direct_perturb(current, budget.epsilon_total, rng, budget=budget)

    window = DivisionPoints(start=start, end=end)
    out = np.empty_like(np.asarray(current.counts, dtype=float))

    before = list(range(0, window.start - 1))
    if before:
        leg = threshold_perturb(
            _subseries(current, before),
            eps_t1,
            params.leg(params.cutoff_before),
            rng,
            budget=PrivacyBudget(epsilon_total=eps_t1),
            time_offsets=before,
        )
        out[before] = leg.counts
    budget.charge("threshold-before", eps_t1)

    day = current.slice_t(window.start, window.end)
    out[window.start - 1 : window.end] = direct_perturb(
        day, eps_d, rng, budget=budget, time_offset=window.start - 1
    ).counts

    after = list(range(window.end, n))
    if after:
        leg = threshold_perturb(
            _subseries(current, after),
            eps_t2,
            params.leg(params.cutoff_after),
            rng,
            budget=PrivacyBudget(epsilon_total=eps_t2),
            time_offsets=after,
        )
        out[after] = leg.counts
    # As in the static hybrid, the last leg bills whatever remains of the
    # total so the ledger closes exactly.
    budget.charge_remaining_of("threshold-after", budget.epsilon_total)

    result = current.copy()
    result.counts = out
    return result
