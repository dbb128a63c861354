"""Approximate random variables via cheap piecewise-polynomial quantiles.

Fit piecewise-constant or piecewise-polynomial approximations to the
Gaussian and non-central chi-squared inverse CDFs, evaluate them through
branch-free batch kernels (compiled extension with a pure-numpy
fallback), measure Lp errors, and exploit the approximations inside a
nested multilevel Monte Carlo engine without losing accuracy.
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .errors import (
    ApproxRvError,
    BadMagicError,
    ChecksumError,
    ConfigError,
    DomainError,
    NumericalError,
    TableIOError,
    TruncatedFileError,
    VersionError,
)
from .exact_dist import (
    GaussianRef,
    NcChi2Ref,
    cir_transition_params,
    gaussian_cdf,
    gaussian_inv_cdf,
    gaussian_pdf,
    ncchi2_cdf,
    ncchi2_inv_cdf,
    ncchi2_inv_cdf_batch,
    ncchi2_pdf,
    ncchi2_sf,
)
from .fit import (
    GaussianQuantileOracle,
    NcChi2POracle,
    fit_constant,
    fit_dyadic_table,
    fit_gaussian_dyadic,
    fit_ncchi2,
    fit_poly_interval,
)
from .metrics import LpErrorReport, lp_error, rmse_ncchi2, scaling_study_constant, scaling_study_dyadic
from .mlmc import (
    Allocation,
    CirParams,
    GbmParams,
    LevelSpec,
    LevelStats,
    estimate_level,
    estimate_level_suite,
    level_stream,
    optimal_allocation,
    optimal_allocation_nested,
    simulate_cir_coupled,
    simulate_gbm_coupled,
    speedup_report,
)
from .sampler import (
    CoupledGaussianBatch,
    GaussianSamplePair,
    UniformStream,
    dyadic_index,
    eval_constant,
    eval_dyadic,
    eval_ncchi2,
    evaluate,
    sample_coupled,
)
from .tableio import export_table, import_table
from .tables import ConstantTable, DyadicPolyTable, NcChi2Table

__all__ = [
    "ApproxRvError", "BadMagicError", "ChecksumError", "ConfigError", "DomainError",
    "NumericalError", "TableIOError", "TruncatedFileError", "VersionError",
    "GaussianRef", "NcChi2Ref", "cir_transition_params",
    "gaussian_cdf", "gaussian_inv_cdf", "gaussian_pdf",
    "ncchi2_cdf", "ncchi2_inv_cdf", "ncchi2_inv_cdf_batch", "ncchi2_pdf", "ncchi2_sf",
    "GaussianQuantileOracle", "NcChi2POracle",
    "fit_constant", "fit_dyadic_table", "fit_gaussian_dyadic", "fit_ncchi2", "fit_poly_interval",
    "LpErrorReport", "lp_error", "rmse_ncchi2", "scaling_study_constant", "scaling_study_dyadic",
    "Allocation", "CirParams", "GbmParams", "LevelSpec", "LevelStats",
    "estimate_level", "estimate_level_suite", "level_stream",
    "optimal_allocation", "optimal_allocation_nested",
    "simulate_cir_coupled", "simulate_gbm_coupled", "speedup_report",
    "CoupledGaussianBatch", "GaussianSamplePair", "UniformStream",
    "dyadic_index", "eval_constant", "eval_dyadic", "eval_ncchi2", "evaluate", "sample_coupled",
    "export_table", "import_table",
    "ConstantTable", "DyadicPolyTable", "NcChi2Table",
    "backend_name",
]
