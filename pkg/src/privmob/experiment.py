"""Sweep runner: publish, post-process, score, optionally attack.

One experiment = a synthetic population, a scheme list, an epsilon grid and a
repeat count.  Every (scheme, repeat) pair reuses one random stream across the
whole epsilon grid, so sweeping epsilon only rescales the same underlying
noise draws instead of resampling them; utility curves then move smoothly in
epsilon.  Failures of individual runs are recorded in the report's ``error``
column instead of aborting the sweep.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .attack import AttackConfig, recover, recovery_accuracy
from .dp import RandomSource, split_budget
from .metrics import DEFAULT_GAMMA, utility_report
from .postprocess import consistency_postprocess
from .schemes import (
    DEFAULT_ALPHA,
    DynamicParams,
    ThresholdParams,
    direct_perturb,
    dynamic_hybrid,
    static_hybrid,
    threshold_perturb,
)
from .series import AggregatedSeries, mean_adjacent_distance
from .synthgen import GeneratorConfig, generate

logger = logging.getLogger(__name__)

SCHEMES = ("direct", "threshold", "static-hybrid", "dynamic-hybrid")

REPORT_HEADER = [
    "scheme",
    "epsilon",
    "threshold",
    "seed",
    "repeat",
    "mae",
    "mre",
    "attack_accuracy",
    "error",
]

SUMMARY_HEADER = [
    "scheme",
    "epsilon",
    "threshold",
    "mae",
    "mre",
    "attack_accuracy",
    "runs",
    "errors",
]


@dataclass
class ExperimentConfig:
    schemes: tuple[str, ...] = SCHEMES
    epsilons: tuple[float, ...] = (0.1, 0.4, 0.8, 1.2, 1.6, 2.0)
    repeats: int = 10
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    threshold: float | None = None  # None: threshold_fraction * mean adjacent distance
    threshold_fraction: float = 0.25
    cutoff: int | None = None  # standalone threshold scheme; None: max(1, S // 2)
    night_cutoff: int = 1
    rho: float = 0.5
    alpha: float = DEFAULT_ALPHA
    # Window budget dominates because in-window histograms change every
    # timestamp; the night legs still need real budget since every copied
    # timestamp inherits its leg's release noise.
    static_split: dict[str, float] = field(
        default_factory=lambda: {"s": 0.15, "d": 0.6, "t": 0.25}
    )
    dynamic_split: dict[str, float] = field(
        default_factory=lambda: {"d": 0.5, "t1": 0.25, "t2": 0.25}
    )
    history_days: int = 5
    gamma: float = DEFAULT_GAMMA
    mre_denominator: str = "true"
    # Reports score the mechanisms themselves; consistency repair is its own
    # pipeline stage.  The attack path always repairs first regardless, since
    # recovery needs integral histograms.
    postprocess: bool = False
    attack: bool = False
    attack_sigma: float = 5.0
    attack_lambda: float = 0.5

    def __post_init__(self) -> None:
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown schemes {unknown}; valid: {list(SCHEMES)}")
        if not self.epsilons:
            raise ValueError("need at least one epsilon")
        for eps in self.epsilons:
            if not (eps > 0 and math.isfinite(eps)):
                raise ValueError(f"epsilons must be positive and finite, got {eps}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.history_days < 2 and "dynamic-hybrid" in self.schemes:
            raise ValueError("dynamic-hybrid needs history_days >= 2")


@dataclass
class RunResult:
    scheme: str
    epsilon: float
    threshold: float | None
    seed: int
    repeat: int
    mae: float | None = None
    mre: float | None = None
    attack_accuracy: float | None = None
    error: str | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunResult]
    report_path: Path | None = None
    summary_path: Path | None = None
    figure_paths: list[Path] = field(default_factory=list)


def config_to_dict(config: ExperimentConfig) -> dict:
    out = dataclasses.asdict(config)
    gen = out["generator"]
    gen["grid"] = dataclasses.asdict(config.generator.grid)
    gen["stay_distribution"] = {str(k): v for k, v in config.generator.stay_distribution.items()}
    gen["hotspots"] = [dataclasses.asdict(h) for h in config.generator.hotspots]
    out["schemes"] = list(config.schemes)
    out["epsilons"] = list(config.epsilons)
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    gen_data = dict(data.pop("generator", {}))
    if "grid" in gen_data:
        from .grid import GridSpec

        gen_data["grid"] = GridSpec(**gen_data["grid"])
    if "stay_distribution" in gen_data:
        gen_data["stay_distribution"] = {
            int(k): float(v) for k, v in gen_data["stay_distribution"].items()
        }
    if "hotspots" in gen_data:
        from .synthgen import Hotspot

        gen_data["hotspots"] = tuple(Hotspot(**h) for h in gen_data["hotspots"])
    if "day_window" in gen_data:
        gen_data["day_window"] = tuple(gen_data["day_window"])
    data["schemes"] = tuple(data.get("schemes", SCHEMES))
    data["epsilons"] = tuple(data.get("epsilons", ()))
    return ExperimentConfig(generator=GeneratorConfig(**gen_data), **data)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n")


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def resolve_threshold(config: ExperimentConfig, series: AggregatedSeries) -> float:
    """The distance threshold used by every threshold-based scheme.

    Defaults to a fraction of the series' mean adjacent distance; tuning it
    from the raw data is an evaluation convenience, not part of the private
    release.
    """
    if config.threshold is not None:
        return config.threshold
    if series.n_timestamps < 2:
        return 0.0
    return config.threshold_fraction * mean_adjacent_distance(series)


def _scheme_stream(scheme: str, repeat: int) -> int:
    # Shared across schemes on purpose: noise substreams are keyed by global
    # timestamp, so the same repeat compares schemes on the same draws (a
    # paired design), and the same (scheme, repeat) reuses its draws across
    # the epsilon grid.
    del scheme
    return repeat


def publish(
    scheme: str,
    series: AggregatedSeries,
    epsilon: float,
    config: ExperimentConfig,
    rng: RandomSource,
    history: list[AggregatedSeries] | None = None,
    threshold: float | None = None,
) -> AggregatedSeries:
    """Run one scheme once with the experiment's parameter policy."""
    t_value = threshold if threshold is not None else resolve_threshold(config, series)
    n = series.n_timestamps
    if scheme == "direct":
        return direct_perturb(series, epsilon, rng)
    if scheme == "threshold":
        cutoff = config.cutoff if config.cutoff is not None else max(1, n // 2)
        params = ThresholdParams(threshold=t_value, cutoff=cutoff, rho=config.rho)
        return threshold_perturb(series, epsilon, params, rng)
    if scheme == "static-hybrid":
        budget = split_budget(epsilon, config.static_split)
        params = ThresholdParams(threshold=t_value, cutoff=config.night_cutoff, rho=config.rho)
        return static_hybrid(series, budget, params, config.alpha, rng)
    if scheme == "dynamic-hybrid":
        if not history:
            raise ValueError("dynamic-hybrid needs historical days")
        budget = split_budget(epsilon, config.dynamic_split)
        params = DynamicParams(
            threshold=t_value,
            cutoff_before=config.night_cutoff,
            cutoff_after=config.night_cutoff,
            rho=config.rho,
        )
        return dynamic_hybrid(history, series, budget, params, config.alpha, rng)
    raise ValueError(f"unknown scheme {scheme!r}")


def night_window_of(generator: GeneratorConfig) -> frozenset[int]:
    d1, d2 = generator.day_window
    return frozenset(t for t in range(1, generator.n_timestamps + 1) if not d1 <= t <= d2)


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Full sweep; writes report.csv and summary.csv when out_dir is given."""
    truth, series = generate(config.generator)
    history = [
        generate(dataclasses.replace(config.generator, seed=config.generator.seed + 1 + h))[1]
        for h in range(config.history_days)
    ]
    t_value = resolve_threshold(config, series)
    attack_config = AttackConfig(
        sigma=config.attack_sigma,
        lam=config.attack_lambda,
        night_window=night_window_of(config.generator),
    )

    runs: list[RunResult] = []
    for scheme in config.schemes:
        uses_threshold = scheme != "direct"
        for repeat in range(config.repeats):
            stream = _scheme_stream(scheme, repeat)
            for epsilon in config.epsilons:
                run = RunResult(
                    scheme=scheme,
                    epsilon=epsilon,
                    threshold=t_value if uses_threshold else None,
                    seed=config.seed,
                    repeat=repeat,
                )
                try:
                    rng = RandomSource(config.seed, stream=stream)
                    published = publish(
                        scheme, series, epsilon, config, rng, history=history, threshold=t_value
                    )
                    if config.postprocess or config.attack:
                        post_rng = RandomSource(config.seed, stream=stream).substream(1)
                        cleaned = consistency_postprocess(published, post_rng)
                    final = cleaned if config.postprocess else published
                    report = utility_report(
                        series,
                        final,
                        scheme=scheme,
                        epsilon=epsilon,
                        seed=config.seed,
                        gamma=config.gamma,
                        mre_denominator=config.mre_denominator,
                    )
                    run.mae = report.mae
                    run.mre = report.mre
                    if config.attack:
                        recovered = recover(cleaned, attack_config, grid=config.generator.grid)
                        run.attack_accuracy = recovery_accuracy(recovered, truth)
                except Exception as exc:  # keep sweeping; the row records the failure
                    logger.warning("run failed: %s eps=%s repeat=%s: %s", scheme, epsilon, repeat, exc)
                    run.error = f"{type(exc).__name__}: {exc}"
                runs.append(run)

    result = ExperimentResult(config=config, runs=runs)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.report_path = out / "report.csv"
        result.summary_path = out / "summary.csv"
        write_report(runs, result.report_path)
        write_summary(runs, result.summary_path)
    return result


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(runs: list[RunResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for run in runs:
            writer.writerow(
                [
                    run.scheme,
                    _cell(run.epsilon),
                    _cell(run.threshold),
                    run.seed,
                    run.repeat,
                    _cell(run.mae),
                    _cell(run.mre),
                    _cell(run.attack_accuracy),
                    run.error or "",
                ]
            )


def read_report(path: str | Path) -> list[RunResult]:
    out: list[RunResult] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_HEADER:
            raise ValueError(f"unexpected report header {reader.fieldnames}")
        for row in reader:
            out.append(
                RunResult(
                    scheme=row["scheme"],
                    epsilon=float(row["epsilon"]),
                    threshold=float(row["threshold"]) if row["threshold"] else None,
                    seed=int(row["seed"]),
                    repeat=int(row["repeat"]),
                    mae=float(row["mae"]) if row["mae"] else None,
                    mre=float(row["mre"]) if row["mre"] else None,
                    attack_accuracy=float(row["attack_accuracy"]) if row["attack_accuracy"] else None,
                    error=row["error"] or None,
                )
            )
    return out


def summarize(runs: list[RunResult]) -> list[dict]:
    """Mean metrics per (scheme, epsilon) over the repeats that succeeded."""
    groups: dict[tuple[str, float], list[RunResult]] = {}
    order: list[tuple[str, float]] = []
    for run in runs:
        key = (run.scheme, run.epsilon)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(run)

    rows: list[dict] = []
    for key in order:
        members = groups[key]
        good = [r for r in members if r.error is None]

        def _mean(values: list[float | None]) -> float | None:
            present = [v for v in values if v is not None]
            return sum(present) / len(present) if present else None

        rows.append(
            {
                "scheme": key[0],
                "epsilon": key[1],
                "threshold": next((r.threshold for r in members), None),
                "mae": _mean([r.mae for r in good]),
                "mre": _mean([r.mre for r in good]),
                "attack_accuracy": _mean([r.attack_accuracy for r in good]),
                "runs": len(good),
                "errors": len(members) - len(good),
            }
        )
    return rows


def write_summary(runs: list[RunResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for row in summarize(runs):
            writer.writerow([_cell(row[k]) for k in SUMMARY_HEADER])
