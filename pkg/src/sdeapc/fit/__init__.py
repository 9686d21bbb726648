"""Estimators for cell transition probabilities and mental-health difference models."""

from .binomial import (ESTIMATORS, BinomialFit, cell_rows, fit_binomial, fit_complete,
                       fit_direct, fit_estimator, fit_naive_kernel, fit_partial, fit_saturated,
                       fit_tensor, fit_weighted)
from .gaussian import MhModelSpec, diff_rows, fit_mh, standardized_residuals
from .laplace import FittedModel, posterior_draws
from .sampler import SamplerResult, mh_sampler
from .structure import LAMBDA_GRID, SIGMA_GRID, CellEffects, Fixed, LinearStructure, Rows, TensorSmooth

__all__ = [
    "ESTIMATORS", "BinomialFit", "cell_rows", "fit_binomial", "fit_complete", "fit_direct",
    "fit_estimator", "fit_naive_kernel", "fit_partial", "fit_saturated", "fit_tensor",
    "fit_weighted", "MhModelSpec", "diff_rows", "fit_mh", "standardized_residuals",
    "FittedModel", "posterior_draws", "SamplerResult", "mh_sampler", "LAMBDA_GRID",
    "SIGMA_GRID", "CellEffects", "Fixed", "LinearStructure", "Rows", "TensorSmooth",
]
