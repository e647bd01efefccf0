"""Differentially private publication of aggregated mobility series.

The package covers the full loop: aggregate raw location records onto a grid,
publish the per-timestamp histograms under one of four epsilon-DP schemes,
repair the noisy output into integral histograms, score utility, and measure
how well a trajectory-recovery attack does against the published data.
"""
from .attack import (
    AttackConfig,
    RecoveredTrajectorySet,
    build_cost_matrix,
    expand_slots,
    recover,
    recovery_accuracy,
    recovery_breakdown,
    solve_assignment,
)
from .dp import (
    PrivacyBudget,
    RandomSource,
    exponential_select,
    sample_laplace,
    selection_probabilities,
    split_budget,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    RunResult,
    load_config,
    publish,
    run_experiment,
    save_config,
    summarize,
)
from .figures import render_figures
from .grid import GridSpec, cell_centroid, map_to_cell, read_grid, write_grid
from .metrics import UtilityReport, mae, mre, utility_report
from .postprocess import consistency_postprocess, postprocess_error_delta
from .schemes import (
    DEFAULT_ALPHA,
    DivisionPoints,
    DynamicParams,
    RegressionModel,
    ThresholdParams,
    direct_perturb,
    division_selection_probabilities,
    division_utility,
    dynamic_hybrid,
    fit_divisions,
    select_division,
    static_hybrid,
    threshold_perturb,
    utility_sensitivity,
)
from .series import (
    AggregatedSeries,
    TrajectoryDataset,
    TrajectoryRecord,
    adjacent_distances,
    aggregate,
    l1_distance,
    mean_adjacent_distance,
    read_records,
    read_series,
    read_trajectories,
    write_records,
    write_series,
    write_trajectories,
)
from .synthgen import GeneratorConfig, Hotspot, generate

__version__ = "0.1.0"

__all__ = [
    "AggregatedSeries",
    "AttackConfig",
    "DEFAULT_ALPHA",
    "DivisionPoints",
    "DynamicParams",
    "ExperimentConfig",
    "ExperimentResult",
    "GeneratorConfig",
    "GridSpec",
    "Hotspot",
    "PrivacyBudget",
    "RandomSource",
    "RecoveredTrajectorySet",
    "RegressionModel",
    "RunResult",
    "ThresholdParams",
    "TrajectoryDataset",
    "TrajectoryRecord",
    "UtilityReport",
    "adjacent_distances",
    "aggregate",
    "build_cost_matrix",
    "cell_centroid",
    "consistency_postprocess",
    "direct_perturb",
    "division_selection_probabilities",
    "division_utility",
    "dynamic_hybrid",
    "expand_slots",
    "exponential_select",
    "fit_divisions",
    "generate",
    "l1_distance",
    "load_config",
    "mae",
    "map_to_cell",
    "mean_adjacent_distance",
    "mre",
    "postprocess_error_delta",
    "publish",
    "read_grid",
    "read_records",
    "read_series",
    "read_trajectories",
    "recover",
    "recovery_accuracy",
    "recovery_breakdown",
    "render_figures",
    "run_experiment",
    "sample_laplace",
    "save_config",
    "select_division",
    "selection_probabilities",
    "solve_assignment",
    "split_budget",
    "static_hybrid",
    "summarize",
    "threshold_perturb",
    "utility_report",
    "utility_sensitivity",
    "write_grid",
    "write_records",
    "write_series",
    "write_trajectories",
]
