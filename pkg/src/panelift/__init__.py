"""panelift: panel-data uplift scoring with experimental calibration.

Pipeline: simulate (or ingest) per-unit time series, fit one regression
per unit to get observational effect estimates, learn a covariate-to-
score model on top-quantile labels, then validate and calibrate the
scores against a randomized experiment.
"""

from .dgp import (
    CovariateSpec,
    DgpSpec,
    ExperimentDataset,
    PanelDataset,
    UnitParams,
    constant_effect_spec,
    covariate_matrix,
    rank_inverting_spec,
    rank_preserving_spec,
    sample_units,
    simulate_experiment,
    simulate_panel,
    spec_with_preset,
    theoretical_bias,
)
from .expanalysis import (
    MonotoneMap,
    RegressionFit,
    StratumReport,
    fit_monotone_map,
    interaction_regression,
    preprocess_outcome,
    select_targets,
    stratified_effects,
)
from .kernels import get_backend
from .learner import (
    GbdtModel,
    LabeledExample,
    TrainConfig,
    TrainLog,
    auc,
    make_examples,
    make_labels,
    predict_score,
    train,
    train_arrays,
)
from .links import Affine, FixedGridAffinity, LinkFunctions, PiecewiseLinear, UniformAffinity
from .panel import UnitEffectEstimate, SkipRecord, fit_all, fit_unit, residualize
from .rankcheck import (
    RankReport,
    kendall_tau,
    necessary_condition_check,
    rank_preservation_report,
    spearman_rho,
    sufficient_condition_holds,
)

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "CovariateSpec",
    "DgpSpec",
    "ExperimentDataset",
    "FixedGridAffinity",
    "GbdtModel",
    "LabeledExample",
    "LinkFunctions",
    "MonotoneMap",
    "PanelDataset",
    "PiecewiseLinear",
    "RankReport",
    "RegressionFit",
    "SkipRecord",
    "StratumReport",
    "TrainConfig",
    "TrainLog",
    "UniformAffinity",
    "UnitEffectEstimate",
    "UnitParams",
    "auc",
    "constant_effect_spec",
    "covariate_matrix",
    "fit_all",
    "fit_monotone_map",
    "fit_unit",
    "get_backend",
    "interaction_regression",
    "kendall_tau",
    "make_examples",
    "make_labels",
    "necessary_condition_check",
    "predict_score",
    "preprocess_outcome",
    "rank_inverting_spec",
    "rank_preservation_report",
    "rank_preserving_spec",
    "residualize",
    "sample_units",
    "select_targets",
    "simulate_experiment",
    "simulate_panel",
    "spearman_rho",
    "spec_with_preset",
    "stratified_effects",
    "sufficient_condition_holds",
    "theoretical_bias",
    "train",
    "train_arrays",
    "__version__",
]
