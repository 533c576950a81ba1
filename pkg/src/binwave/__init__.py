"""Adaptive wavelet inference for binary regression with unknown design.

Estimation, goodness-of-fit testing, and honest confidence balls for the
regression function of a binary response on covariates in the unit cube,
built on periodized wavelet projections, Lepski level selection, and
second-order U-statistics.
"""

from .confidence import (
    AdaptiveConfidenceBall,
    BetaGrid,
    ConfidenceBall,
    ConfidenceConfig,
    SmoothnessSelection,
    beta_grid,
    build_confidence_ball,
    contains,
    radius_upper_bound,
    select_smoothness,
    shell_radius,
)
from .data import Dataset, check_labels, check_points
from .estimators import (
    AdaptiveDensityEstimate,
    AdaptiveRegressionEstimate,
    ClassParams,
    LevelGrids,
    WaveletBinaryRegressor,
    WaveletDensityEstimator,
    density_candidate,
    estimate_density,
    estimate_regression,
    lepski_select,
    level_grids,
    smooth_clamp,
)
from .gof import (
    CompositeTestConfig,
    SimpleTestConfig,
    TestOutcome,
    composite_cutoff,
    composite_test,
    minimax_separation,
    simple_null_test,
    theory_level,
)
from .simulation import (
    BumpFamily,
    ExperimentReport,
    ModelSpec,
    bump_profile,
    calibrate,
    make_bump_regression,
    make_model,
    make_shell_regression,
    mc_coverage,
    mc_rate,
    mc_rejection_rate,
    model_fingerprint,
    rate_slope,
    replicate_stream,
    sample_dataset,
)
from .ustat import (
    HoeffdingSplit,
    TailParams,
    WeightedSample,
    hoeffding_split,
    tail_bound,
    tail_params,
    ustat_bruteforce,
    ustat_fast,
)
from .wavelets import (
    CoeffTree,
    GridFunction,
    WaveletBasis,
    analyze,
    besov_norm,
    build_basis,
    distance_to_besov_ball,
    eval_basis,
    kernel_v,
    kernel_w,
    orientations,
    synthesize,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfidenceBall",
    "BetaGrid",
    "ConfidenceBall",
    "ConfidenceConfig",
    "SmoothnessSelection",
    "beta_grid",
    "build_confidence_ball",
    "contains",
    "radius_upper_bound",
    "select_smoothness",
    "shell_radius",
    "Dataset",
    "check_labels",
    "check_points",
    "CompositeTestConfig",
    "SimpleTestConfig",
    "TestOutcome",
    "composite_cutoff",
    "composite_test",
    "minimax_separation",
    "simple_null_test",
    "theory_level",
    "BumpFamily",
    "ExperimentReport",
    "ModelSpec",
    "bump_profile",
    "calibrate",
    "make_bump_regression",
    "make_model",
    "make_shell_regression",
    "mc_coverage",
    "mc_rate",
    "mc_rejection_rate",
    "model_fingerprint",
    "rate_slope",
    "replicate_stream",
    "sample_dataset",
    "AdaptiveDensityEstimate",
    "AdaptiveRegressionEstimate",
    "ClassParams",
    "LevelGrids",
    "WaveletBinaryRegressor",
    "WaveletDensityEstimator",
    "density_candidate",
    "estimate_density",
    "estimate_regression",
    "lepski_select",
    "level_grids",
    "smooth_clamp",
    "HoeffdingSplit",
    "TailParams",
    "WeightedSample",
    "hoeffding_split",
    "tail_bound",
    "tail_params",
    "ustat_bruteforce",
    "ustat_fast",
    "CoeffTree",
    "GridFunction",
    "WaveletBasis",
    "analyze",
    "besov_norm",
    "build_basis",
    "distance_to_besov_ball",
    "eval_basis",
    "kernel_v",
    "kernel_w",
    "orientations",
    "synthesize",
    "__version__",
]
