"""Command-line surface: aggregate, generate, publish, postprocess, attack, evaluate, experiment.

Every randomized command takes ``--seed`` and ``--stream``; rerunning any
command with identical flags produces byte-identical output files.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attack import AttackConfig, recover, recovery_breakdown
from .dp import RandomSource
from .experiment import (
    ExperimentConfig,
    load_config,
    publish as run_scheme,
    resolve_threshold,
    run_experiment,
    save_config,
)
from .figures import render_figures
from .grid import read_grid
from .metrics import DEFAULT_GAMMA, utility_report
from .postprocess import consistency_postprocess
from .schemes import DEFAULT_ALPHA
from .series import (
    AggregatedSeries,
    TrajectoryDataset,
    aggregate,
    read_records,
    read_series,
    read_trajectories,
    write_records,
    write_series,
    write_trajectories,
)
from .synthgen import GeneratorConfig, generate, records_from_dataset

SCHEME_CHOICES = ("direct", "threshold", "static-hybrid", "dynamic-hybrid")


def _parse_window(text: str) -> tuple[int, int]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers in a:b, got {text!r}") from exc
    if a > b:
        raise argparse.ArgumentTypeError(f"window start exceeds end in {text!r}")
    return a, b


def _parse_splits(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected colon-separated floats, got {text!r}") from exc
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected three fractions, got {len(values)}")
    return values


def _add_seed_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="root random seed")
    parser.add_argument("--stream", type=int, default=0, help="independent stream id under the seed")


def cmd_aggregate(args: argparse.Namespace) -> int:
    grid = read_grid(args.grid)
    records = read_records(args.records)
    horizon = args.horizon_s if args.horizon_s is not None else args.timestamps * args.interval_s
    series, dataset = aggregate(records, grid, interval_s=args.interval_s, horizon_s=horizon)
    write_series(series, args.out_series)
    if args.out_trajectories:
        write_trajectories(dataset, args.out_trajectories)
    print(f"aggregated {len(records)} records into {series.n_timestamps}x{series.n_cells} series")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    config = GeneratorConfig(seed=args.seed)
    if args.grid:
        config.grid = read_grid(args.grid)
    if args.users is not None:
        config.n_users = args.users
    if args.timestamps is not None:
        config.n_timestamps = args.timestamps
    if args.day is not None:
        config.day_window = args.day
    config.__post_init__()  # re-validate after the overrides
    dataset, series = generate(config, RandomSource(seed=args.seed, stream=args.stream))
    if args.out_series:
        write_series(series, args.out_series)
    if args.out_records:
        write_records(records_from_dataset(dataset, config.grid, config.interval_s), args.out_records)
    if args.out_trajectories:
        write_trajectories(dataset, args.out_trajectories)
    print(f"generated {config.n_users} users over {config.n_timestamps} timestamps")
    return 0


def cmd_publish(args: argparse.Namespace) -> int:
    series = read_series(args.infile)
    history = [read_series(p) for p in args.history] if args.history else None
    if args.scheme == "dynamic-hybrid" and not history:
        raise ValueError("dynamic-hybrid needs --history with at least two series files")

    splits = args.splits
    config = ExperimentConfig(
        schemes=(args.scheme,),
        epsilons=(args.epsilon,),
        repeats=1,
        seed=args.seed,
        threshold=args.threshold,
        cutoff=args.cutoff,
        night_cutoff=args.night_cutoff,
        rho=args.rho,
        alpha=args.alpha,
        history_days=max(2, len(history) if history else 2),
    )
    if splits is not None:
        if args.scheme == "static-hybrid":
            config.static_split = dict(zip(("s", "d", "t"), splits))
        elif args.scheme == "dynamic-hybrid":
            config.dynamic_split = dict(zip(("d", "t1", "t2"), splits))
        else:
            raise ValueError(f"--splits only applies to hybrid schemes, not {args.scheme}")

    rng = RandomSource(seed=args.seed, stream=args.stream)
    published = run_scheme(args.scheme, series, args.epsilon, config, rng, history=history)
    write_series(published, args.out)
    print(f"published {args.scheme} at epsilon={args.epsilon} -> {args.out}")
    return 0


def cmd_postprocess(args: argparse.Namespace) -> int:
    series = read_series(args.infile)
    rng = RandomSource(seed=args.seed, stream=args.stream)
    write_series(consistency_postprocess(series, rng), args.out)
    print(f"post-processed {args.infile} -> {args.out}")
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    grid = read_grid(args.grid)
    series = read_series(args.series, grid=grid)
    truth = read_trajectories(args.truth)
    if args.points is not None:
        if not 1 <= args.points <= series.n_timestamps:
            raise ValueError(
                f"--points must lie in [1, {series.n_timestamps}], got {args.points}"
            )
        series = series.slice_t(1, args.points)
        truth = TrajectoryDataset(user_ids=truth.user_ids, cells=truth.cells[:, : args.points])
    night = frozenset(t for a, b in (args.night or []) for t in range(a, b + 1))
    config = AttackConfig(sigma=args.sigma, lam=getattr(args, "lambda"), night_window=night)
    recovered = recover(series, config, grid=grid)
    accuracy, per_t = recovery_breakdown(recovered, truth)
    report = {
        "accuracy": accuracy,
        "per_timestamp_correct": [float(v) for v in per_t],
        "n_trajectories": recovered.n_trajectories,
    }
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    raw = read_series(args.raw)
    noisy = read_series(args.noisy)
    report = utility_report(
        raw, noisy, gamma=args.gamma, mre_denominator=args.mre_denominator
    )
    lines = ["metric,value", f"mae,{report.mae!r}", f"mre,{report.mre!r}"]
    if args.per_timestamp:
        for t, (a, r) in enumerate(zip(report.per_timestamp_mae, report.per_timestamp_mre)):
            lines.append(f"mae[t{t:02d}],{float(a)!r}")
            lines.append(f"mre[t{t:02d}],{float(r)!r}")
    text = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    if args.init_config:
        save_config(ExperimentConfig(), args.init_config)
        print(f"wrote default config to {args.init_config}")
        return 0
    if not args.config:
        raise ValueError("--config is required (or use --init-config to create one)")
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    result = run_experiment(config, out_dir=args.out_dir)
    if args.figures:
        result.figure_paths = render_figures(result.runs, args.out_dir)
    print(f"wrote {result.report_path} and {result.summary_path}")
    for p in result.figure_paths:
        print(f"wrote {p}")
    errors = sum(1 for r in result.runs if r.error is not None)
    if errors:
        print(f"{errors} of {len(result.runs)} runs failed; see the error column")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privmob",
        description="Private aggregated-mobility publication and trajectory-recovery evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="bucket raw location records into an aggregated series")
    p.add_argument("--records", required=True, help="input CSV (user_id,time,lon,lat)")
    p.add_argument("--grid", required=True, help="grid spec JSON")
    p.add_argument("--interval-s", type=float, default=3600.0, help="bucket width in seconds")
    p.add_argument("--timestamps", type=int, default=19, help="bucket count when --horizon-s is absent")
    p.add_argument("--horizon-s", type=float, default=None, help="total covered time in seconds")
    p.add_argument("--out-series", required=True)
    p.add_argument("--out-trajectories", default=None)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("generate", help="sample a synthetic population")
    p.add_argument("--users", type=int, default=None)
    p.add_argument("--grid", default=None, help="grid spec JSON (default: built-in 32x32)")
    p.add_argument("--timestamps", type=int, default=None)
    p.add_argument("--day", type=_parse_window, default=None, metavar="A:B",
                   help="1-based inclusive daytime window")
    p.add_argument("--out-records", default=None)
    p.add_argument("--out-series", default=None)
    p.add_argument("--out-trajectories", default=None)
    _add_seed_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("publish", help="perturb a series under one scheme")
    p.add_argument("--scheme", required=True, choices=SCHEME_CHOICES)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None,
                   help="distance threshold (default: a quarter of the mean adjacent distance)")
    p.add_argument("--cutoff", type=int, default=None, help="max fresh releases (default S // 2)")
    p.add_argument("--night-cutoff", type=int, default=1, help="fresh releases per hybrid night leg")
    p.add_argument("--rho", type=float, default=0.5, help="budget fraction for noisy comparisons")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="log base in the window score")
    p.add_argument("--splits", type=_parse_splits, default=None, metavar="A:B:C",
                   help="budget fractions: s:d:t (static) or d:t1:t2 (dynamic)")
    p.add_argument("--history", nargs="+", default=None, metavar="SERIES_CSV",
                   help="historical day series for dynamic-hybrid")
    _add_seed_flags(p)
    p.set_defaults(func=cmd_publish)

    p = sub.add_parser("postprocess", help="round, clip and rebalance a noisy series")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    _add_seed_flags(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("attack", help="recover trajectories from a published series")
    p.add_argument("--series", required=True, help="published (integral) series CSV")
    p.add_argument("--truth", required=True, help="true trajectories CSV")
    p.add_argument("--grid", required=True, help="grid spec JSON")
    p.add_argument("--sigma", type=float, default=5.0, help="distance scale in grid cells")
    p.add_argument("--lambda", type=float, default=0.5, help="weight of revisit frequency")
    p.add_argument("--night", type=_parse_window, action="append", default=None, metavar="A:B",
                   help="night timestamps (repeatable; 1-based inclusive)")
    p.add_argument("--points", type=int, default=None, help="truncate to the first k timestamps")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="score a published series against the raw one")
    p.add_argument("--raw", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="relative-error floor")
    p.add_argument("--mre-denominator", choices=("true", "noisy"), default="true")
    p.add_argument("--per-timestamp", action="store_true", help="include per-timestamp rows")
    p.add_argument("--out", default=None, help="also write the CSV report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a configured sweep and write reports")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--out-dir", default="experiment-out")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--init-config", default=None, metavar="PATH",
                   help="write a default config JSON and exit")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                   help="render PNG curves next to the CSVs")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
