"""copmtl: Gaussian-copula coupled multi-task learning lab.

A small library plus experiment CLI for two continuous + two binary
responses driven by paired covariate groups: the mixed 4-dim Gaussian
copula log density and its gradients, feasible two-stage fitting, a toy
bi-channel encoder/adapter model, synthetic generators, and Monte Carlo
experiments for the estimator's rate and efficiency properties.
"""

from .copula import (
    ConditionalLatent,
    CopulaParams,
    MarginalMeans,
    MixedLabel,
    copula_loss,
    grad_log_density,
    log_density,
    quadrant_prob,
    validate,
)
from .estimator import WarmupOutputs, estimate_empirical, project_to_correlation
from .fit import TrainConfig, empirical_loss, fit_linear, run_feasible
from .model import BiChannelModel, EncoderSpec, HeadSpec, init_model
from .normals import BvnSpec, bvn_cdf, bvn_cdf_general, bvn_cdf_partials, std_cdf, std_pdf, std_quantile
from .synthgen import (
    Dataset,
    GroundTruth,
    LatentModelSpec,
    gen_block_images,
    gen_latent_model,
    implied_truth,
    make_latent_spec,
    oracle_means,
    read_dataset,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "BvnSpec",
    "bvn_cdf",
    "bvn_cdf_general",
    "bvn_cdf_partials",
    "std_cdf",
    "std_pdf",
    "std_quantile",
    "CopulaParams",
    "MarginalMeans",
    "MixedLabel",
    "ConditionalLatent",
    "validate",
    "quadrant_prob",
    "log_density",
    "grad_log_density",
    "copula_loss",
    "WarmupOutputs",
    "estimate_empirical",
    "project_to_correlation",
    "EncoderSpec",
    "HeadSpec",
    "BiChannelModel",
    "init_model",
    "Dataset",
    "GroundTruth",
    "LatentModelSpec",
    "make_latent_spec",
    "implied_truth",
    "oracle_means",
    "gen_block_images",
    "gen_latent_model",
    "write_dataset",
    "read_dataset",
    "TrainConfig",
    "empirical_loss",
    "run_feasible",
    "fit_linear",
    "__version__",
]
