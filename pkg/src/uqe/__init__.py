"""Quantile effects of shifting a selected binary treatment through its instrument."""

from .core_stats import BandwidthRule, GAUSSIAN, empirical_quantile, kde, kde_derivative, silverman
from .data import Dataset
from .dgp import DgpSpec, OracleResult, apparent_effect, bias_decomposition, generate_sample, true_uqe
from .engine import (
    EstimationConfig,
    UqeEstimate,
    estimate_mean_effect,
    estimate_uqe,
    mte_tau_curve,
    test_no_effect,
)
from .errors import UqeError
from .propensity import fit_propensity
from .series import BasisSpec

__version__ = "0.1.0"

__all__ = [
    "BandwidthRule", "BasisSpec", "Dataset", "DgpSpec", "EstimationConfig", "GAUSSIAN", "OracleResult",
    "UqeError", "UqeEstimate", "apparent_effect", "bias_decomposition", "empirical_quantile",
    "estimate_mean_effect", "estimate_uqe", "fit_propensity", "generate_sample", "kde", "kde_derivative",
    "mte_tau_curve", "silverman", "test_no_effect", "true_uqe",
]
