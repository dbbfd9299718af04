"""Experiment harness: metrics, cross-validation, rate- and efficiency-verification
experiments, plot emission, and the command-line interface."""

from .metrics import MetricSet, auc_rank, metrics
from .experiments import (
    ConsistencyConfig,
    CvConfig,
    EfficiencyConfig,
    ExperimentReport,
    MleEquivConfig,
    exp_consistency,
    exp_efficiency,
    exp_mle_equiv,
    pool_images,
    read_report,
    run_cv,
    write_report,
)
from .plots import emit_plots

__all__ = [
    "MetricSet",
    "auc_rank",
    "metrics",
    "ConsistencyConfig",
    "CvConfig",
    "EfficiencyConfig",
    "ExperimentReport",
    "MleEquivConfig",
    "exp_consistency",
    "exp_efficiency",
    "exp_mle_equiv",
    "pool_images",
    "read_report",
    "write_report",
    "run_cv",
    "emit_plots",
]
