"""Regression discontinuity estimation and inference with local composite
quantile regression: sharp/fuzzy/kink effects, bias-corrected and
variance-adjusted confidence intervals, data-driven bandwidths, boundary
efficiency tables, and a seeded Monte Carlo harness."""

from .exceptions import (
    CollinearCovariates,
    DegenerateCurvature,
    DegenerateResiduals,
    EmptyAfterFiltering,
    InsufficientData,
    MissingColumn,
    NegativeAdjustedVariance,
    ParseError,
    QuantileInversionFailure,
    RdlcqrError,
    SingularDesign,
    SingularS,
    SolverDiverged,
    WeakIdentification,
)
from .kernels import KernelMoments, KernelSpec, eval_kernel, one_sided_moments
from .sample import RdSample
from .solver import LcqrFit, SolverOptions, fit_boundary, fit_boundary_with_covariates

__version__ = "0.1.0"

__all__ = [
    "KernelSpec",
    "KernelMoments",
    "eval_kernel",
    "one_sided_moments",
    "RdSample",
    "LcqrFit",
    "SolverOptions",
    "fit_boundary",
    "fit_boundary_with_covariates",
    "RdlcqrError",
    "InsufficientData",
    "SolverDiverged",
    "SingularS",
    "SingularDesign",
    "DegenerateResiduals",
    "CollinearCovariates",
    "WeakIdentification",
    "NegativeAdjustedVariance",
    "DegenerateCurvature",
    "QuantileInversionFailure",
    "MissingColumn",
    "ParseError",
    "EmptyAfterFiltering",
]
