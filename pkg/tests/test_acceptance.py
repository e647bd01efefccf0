"""Acceptance gate: one test per release criterion.

Each test prints a single PASS line once its assertions hold, so a verbose
run doubles as the acceptance report.  The sweep-based criteria (9, 10, 13)
run full experiment configurations and take a few minutes each.
"""
import itertools
import json
import math
import subprocess
import sys
import warnings
from dataclasses import replace

import numpy as np
import pytest

from privmob.attack import AttackConfig, recover, recovery_accuracy, solve_assignment
from privmob.dp import PrivacyBudget, RandomSource, exponential_select, sample_laplace, split_budget
from privmob.experiment import (
    ExperimentConfig,
    night_window_of,
    publish,
    resolve_threshold,
    run_experiment,
)
from privmob.postprocess import consistency_postprocess, postprocess_error_delta
from privmob.schemes import (
    DynamicParams,
    ThresholdParams,
    direct_perturb,
    division_scores,
    division_selection_probabilities,
    dynamic_hybrid,
    fit_divisions,
    static_hybrid,
    threshold_perturb,
)
from privmob.series import AggregatedSeries, read_series, write_series
from privmob.synthgen import GeneratorConfig, generate

from test_schemes import brute_force_utilities


def announce(number: int, name: str, detail: str) -> None:
    print(f"criterion {number:02d} {name}: PASS ({detail})")


def random_series(rng: np.random.Generator, s_max: int = 10, m_max: int = 4) -> AggregatedSeries:
    s = int(rng.integers(2, s_max + 1))
    m = int(rng.integers(1, m_max + 1))
    return AggregatedSeries(counts=rng.integers(0, 21, size=(s, m)))


def test_criterion_01_budget_accounting():
    static_fracs = {"s": 0.15, "d": 0.6, "t": 0.25}
    dynamic_fracs = {"d": 0.5, "t1": 0.25, "t2": 0.25}
    for i in range(200):
        rng = np.random.default_rng(i)
        series = random_series(rng)
        eps = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        cutoff = int(rng.integers(1, series.n_timestamps + 1))
        rho = float(rng.choice([0.3, 0.5, 0.7]))
        threshold = float(rng.uniform(0.0, 20.0))
        source = RandomSource(i)

        ledger = PrivacyBudget(epsilon_total=eps)
        direct_perturb(series, eps, source, budget=ledger)
        assert ledger.consumed == eps

        ledger = PrivacyBudget(epsilon_total=eps)
        threshold_perturb(
            series, eps, ThresholdParams(threshold=threshold, cutoff=cutoff, rho=rho),
            source, budget=ledger,
        )
        assert ledger.consumed <= eps

        ledger = split_budget(eps, static_fracs)
        static_hybrid(
            series, ledger, ThresholdParams(threshold=threshold, cutoff=max(1, cutoff // 2), rho=rho),
            rng=source,
        )
        assert ledger.consumed == eps

        history = [
            AggregatedSeries(counts=rng.integers(0, 21, size=series.counts.shape))
            for _ in range(int(rng.integers(2, 5)))
        ]
        ledger = split_budget(eps, dynamic_fracs)
        dynamic_hybrid(
            history, series, ledger, DynamicParams(threshold=threshold, rho=rho),
            rng=source, iterations=3000,
        )
        assert ledger.consumed == eps
    announce(1, "budget accounting", "200 parameterizations, all four schemes, ledgers exact")


def test_criterion_02_laplace_sampler_moments():
    for k, b in enumerate((0.5, 1.0, 5.0)):
        draws = sample_laplace(b, RandomSource(100 + k), size=10**6)
        assert abs(float(draws.mean())) < 0.01 * b
        assert abs(float(draws.var()) - 2 * b * b) < 0.02 * (2 * b * b)
    announce(2, "laplace sampler", "10^6 draws at b in {0.5, 1, 5}: mean +-0.01 b, variance +-2%")


def test_criterion_03_exponential_mechanism_frequencies():
    scores = np.array([0.0, 1.0, 2.0])
    eps, delta_q = 2.0, 1.0
    target = np.exp(scores)
    target /= target.sum()
    rng = RandomSource(200)
    n = 10**5
    counts = np.bincount(
        [exponential_select(scores, eps, delta_q, rng) for _ in range(n)], minlength=3
    )
    deviation = np.abs(counts / n - target).max()
    assert deviation < 0.01
    announce(3, "exponential mechanism", f"10^5 draws, max frequency deviation {deviation:.4f}")


def test_criterion_04_postprocess_properties():
    for i in range(1000):
        rng = np.random.default_rng(i)
        s = int(rng.integers(1, 9))
        m = int(rng.integers(1, 13))
        mu = rng.uniform(-1.0, 3.0)
        sd = rng.uniform(0.5, 5.0)
        noisy = AggregatedSeries(counts=rng.normal(mu, sd, size=(s, m)))
        out = consistency_postprocess(noisy, RandomSource(i))
        assert out.counts.dtype == np.int64
        assert (out.counts >= 0).all()
        rounded = np.sign(noisy.counts) * np.floor(np.abs(noisy.counts) + 0.5)
        for t in range(s):
            assert out.counts[t].sum() == max(0, int(rounded[t].sum()))
        again = consistency_postprocess(out, RandomSource(i + 1))
        assert np.array_equal(again.counts, out.counts)
    announce(4, "post-processing", "1000 series: integral, non-negative, exact totals, idempotent")


def test_criterion_05_postprocess_reduces_error_at_tight_budget():
    _, raw = generate(GeneratorConfig(n_users=100, n_timestamps=10, day_window=(4, 8), seed=0))
    gains = np.empty(500)
    for t in range(500):
        noisy = direct_perturb(raw, 0.1, RandomSource(t))
        before, after = postprocess_error_delta(raw, noisy, RandomSource(t).substream(1))
        gains[t] = before - after
    t_stat = gains.mean() / (gains.std(ddof=1) / math.sqrt(gains.size))
    assert gains.mean() > 0
    assert t_stat > 1.645
    announce(5, "post-processing utility", f"eps=0.1, 500 trials, mean gain {gains.mean():.3f}, t={t_stat:.1f}")


def test_criterion_06_svt_release_structure():
    def fresh_rows(counts: np.ndarray) -> int:
        return 1 + sum(
            not np.array_equal(counts[i], counts[i - 1]) for i in range(1, len(counts))
        )

    for i in range(200):
        rng = np.random.default_rng(1000 + i)
        series = random_series(rng, s_max=12)
        eps = float(np.exp(rng.uniform(np.log(0.1), np.log(3.0))))
        c = int(rng.integers(1, series.n_timestamps + 1))
        params = ThresholdParams(threshold=float(rng.uniform(0.0, 10.0)), cutoff=c)
        out = threshold_perturb(series, eps, params, RandomSource(i))
        assert fresh_rows(out.counts) <= c

        s = series.n_timestamps
        constant = AggregatedSeries(counts=np.tile(series.counts[:1], (s, 1)))
        big_t = ThresholdParams(threshold=1e9, cutoff=max(2, c))
        out = threshold_perturb(constant, eps, big_t, RandomSource(i))
        for middle in range(1, s - 1):
            assert np.array_equal(out.counts[middle], out.counts[0])
    announce(6, "svt structure", "200 runs: fresh releases <= cutoff; constant data reuses one release")


def test_criterion_07_division_scoring_oracle():
    for i in range(100):
        rng = np.random.default_rng(2000 + i)
        s = int(rng.integers(2, 7))
        m = int(rng.integers(1, 4))
        counts = rng.integers(0, 6, size=(s, m))
        points, scores = division_scores(AggregatedSeries(counts=counts))
        expected = brute_force_utilities(counts.tolist())
        for pt, val in zip(points, scores):
            want = expected[(pt.start, pt.end)]
            assert math.isclose(val, want, rel_tol=1e-9, abs_tol=1e-12)
        best = points[int(np.argmax(scores))]
        assert (best.start, best.end) == max(expected, key=expected.get)
    announce(7, "division scoring oracle", "100 series, utilities and argmax match brute force")


def test_criterion_08_division_recovery():
    hits = 0
    for seed in range(50):
        _, series = generate(GeneratorConfig(seed=seed))
        points, probs = division_selection_probabilities(series, 0.16)
        modal = points[int(np.argmax(probs))]
        if abs(modal.start - 7) <= 1 and abs(modal.end - 16) <= 1:
            hits += 1
    assert hits >= 40
    announce(8, "division recovery", f"modal pair within +-1 of (7, 16) on {hits}/50 seeds")


def _scheme_means(config: ExperimentConfig) -> dict[tuple[str, float], float]:
    result = run_experiment(config)
    assert all(run.error is None for run in result.runs)
    means: dict[tuple[str, float], float] = {}
    for scheme in config.schemes:
        for eps in config.epsilons:
            vals = [r.mae for r in result.runs if r.scheme == scheme and r.epsilon == eps]
            means[(scheme, eps)] = float(np.mean(vals))
    return means


def test_criterion_09_utility_ordering():
    config = ExperimentConfig(epsilons=(0.8,), repeats=50, seed=0)
    means = _scheme_means(config)
    static = means[("static-hybrid", 0.8)]
    direct = means[("direct", 0.8)]
    thresh = means[("threshold", 0.8)]
    dynamic = means[("dynamic-hybrid", 0.8)]
    assert static < direct
    assert static < thresh
    gap = abs(dynamic - static) / static
    assert gap <= 0.15
    announce(
        9,
        "utility ordering",
        f"MAE static {static:.2f} < direct {direct:.2f}, < threshold {thresh:.2f}; "
        f"dynamic {dynamic:.2f} within {100 * gap:.1f}%",
    )


def test_criterion_10_epsilon_monotonicity():
    epsilons = tuple(round(0.1 * k, 1) for k in range(1, 11))
    config = ExperimentConfig(epsilons=epsilons, repeats=30, seed=0)
    means = _scheme_means(config)
    inversions = 0
    comparisons = 0
    for scheme in config.schemes:
        curve = [means[(scheme, eps)] for eps in epsilons]
        for a, b in zip(curve, curve[1:]):
            comparisons += 1
            if b > a:
                inversions += 1
    assert inversions <= math.floor(0.05 * comparisons)
    announce(10, "epsilon monotonicity", f"{inversions}/{comparisons} adjacent inversions across schemes")


def test_criterion_11_regression_matches_least_squares():
    model = fit_divisions([(1.0, 5.0, 5.0), (2.0, 7.0, 7.0), (3.0, 9.0, 9.0)])
    start, end = model.predict(4.0)
    assert start == pytest.approx(11.0, abs=1e-8)
    assert end == pytest.approx(11.0, abs=1e-8)

    worst = 0.0
    rng = np.random.default_rng(3000)
    x = np.arange(1.0, 6.0)
    design = np.stack([np.ones_like(x), x], axis=1)
    for _ in range(100):
        a, b = rng.uniform(-3.0, 3.0, size=2)
        y = a + b * x + rng.normal(0.0, 0.3, size=x.size)
        z = a - b * x + rng.normal(0.0, 0.3, size=x.size)
        model = fit_divisions(list(zip(x, y, z)), beta=0.08)
        ref_y, *_ = np.linalg.lstsq(design, y, rcond=None)
        ref_z, *_ = np.linalg.lstsq(design, z, rcond=None)
        worst = max(
            worst,
            abs(model.theta_start[0] - ref_y[0]),
            abs(model.theta_start[1] - ref_y[1]),
            abs(model.theta_end[0] - ref_z[0]),
            abs(model.theta_end[1] - ref_z[1]),
        )
    assert worst < 1e-4
    announce(11, "regression", f"fixture exact; 100 instances, worst deviation {worst:.2e}")


def test_criterion_12_assignment_solver_optimal():
    rng = np.random.default_rng(4000)
    for _ in range(500):
        k = int(rng.integers(2, 8))
        cost = rng.normal(size=(k, k))
        cols = solve_assignment(cost)
        assert sorted(cols.tolist()) == list(range(k))
        achieved = float(cost[np.arange(k), cols].sum())
        best = min(
            sum(cost[i, p[i]] for i in range(k))
            for p in itertools.permutations(range(k))
        )
        assert math.isclose(achieved, best, rel_tol=0, abs_tol=1e-9)
    announce(12, "assignment solver", "500 matrices up to 7x7 match brute force")


@pytest.mark.filterwarnings("ignore:timestamp")
def test_criterion_13_attack_degradation():
    schemes = ("direct", "threshold", "static-hybrid", "dynamic-hybrid")
    base_accs = []
    scheme_accs: dict[str, list[float]] = {s: [] for s in schemes}
    for seed in range(10):
        gen = GeneratorConfig(n_users=200, seed=seed)
        config = ExperimentConfig(generator=gen)
        truth, series = generate(gen)
        attack_cfg = AttackConfig(night_window=night_window_of(gen))
        base_accs.append(recovery_accuracy(recover(series, attack_cfg, grid=gen.grid), truth))
        history = [
            generate(replace(gen, seed=gen.seed + 1 + h))[1] for h in range(config.history_days)
        ]
        threshold = resolve_threshold(config, series)
        for scheme in schemes:
            rng = RandomSource(seed, stream=0)
            published = publish(
                scheme, series, 0.8, config, rng, history=history, threshold=threshold
            )
            cleaned = consistency_postprocess(published, rng.substream(1))
            recovered = recover(cleaned, attack_cfg, grid=gen.grid)
            scheme_accs[scheme].append(recovery_accuracy(recovered, truth))
    base = float(np.mean(base_accs))
    assert base >= 0.5
    ratios = {s: float(np.mean(a)) / base for s, a in scheme_accs.items()}
    assert all(ratio <= 0.5 for ratio in ratios.values())
    worst = max(ratios.values())
    announce(13, "attack degradation", f"raw accuracy {base:.3f}; worst scheme ratio {worst:.3f}")


def test_criterion_14_round_trips_and_cli_determinism(tmp_path):
    int_series = AggregatedSeries(counts=np.arange(12, dtype=np.int64).reshape(3, 4))
    float_series = AggregatedSeries(counts=np.random.default_rng(0).normal(size=(3, 4)))
    for series in (int_series, float_series):
        path = tmp_path / "series.csv"
        write_series(series, path)
        back = read_series(path)
        assert back.counts.dtype == series.counts.dtype
        assert np.array_equal(back.counts, series.counts)
        assert back.interval_s == series.interval_s

    def cli(*args):
        proc = subprocess.run(
            [sys.executable, "-m", "privmob.cli", *args], capture_output=True, text=True
        )
        assert proc.returncode == 0, proc.stderr
        return proc.stdout

    from privmob.grid import GridSpec, write_grid

    write_grid(GridSpec(0.0, 0.0, 500.0, 8, 8), tmp_path / "grid.json")
    gen_args = (
        "generate", "--users", "40", "--timestamps", "8", "--day", "3:6",
        "--grid", str(tmp_path / "grid.json"),
        "--out-records", str(tmp_path / "records.csv"),
        "--out-series", str(tmp_path / "raw.csv"),
        "--out-trajectories", str(tmp_path / "truth.csv"),
        "--seed", "11",
    )
    cli(*gen_args)
    snapshots = {
        name: (tmp_path / name).read_bytes()
        for name in ("records.csv", "raw.csv", "truth.csv")
    }
    cli(*gen_args)
    for name, blob in snapshots.items():
        assert (tmp_path / name).read_bytes() == blob

    pub_args = (
        "publish", "--scheme", "static-hybrid", "--epsilon", "0.8",
        "--in", str(tmp_path / "raw.csv"), "--out", str(tmp_path / "noisy.csv"),
        "--seed", "2",
    )
    cli(*pub_args)
    noisy = (tmp_path / "noisy.csv").read_bytes()
    cli(*pub_args)
    assert (tmp_path / "noisy.csv").read_bytes() == noisy

    post_args = ("postprocess", "--in", str(tmp_path / "noisy.csv"),
                 "--out", str(tmp_path / "clean.csv"))
    cli(*post_args)
    clean = (tmp_path / "clean.csv").read_bytes()
    cli(*post_args)
    assert (tmp_path / "clean.csv").read_bytes() == clean

    attack_args = (
        "attack", "--series", str(tmp_path / "clean.csv"),
        "--truth", str(tmp_path / "truth.csv"),
        "--grid", str(tmp_path / "grid.json"),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        first = cli(*attack_args)
        assert cli(*attack_args) == first
    json.loads(first)

    announce(14, "round trips and determinism", "series files lossless; CLI reruns byte-identical")
