"""Numerical laboratory for empirical processes over time-indexed data:
path generators, the distributional transform, closeness-condition
estimators, shattering counts, empirical-field convergence diagnostics, and
partition-chain construction."""

__version__ = "0.1.0"

from .grids import TimeGrid, discrete_grid, dyadic_grid, product_sheet_grid, uniform_grid
from .metrics import IndexPoint, PseudoMetricTable, estimate_tau, lambda_metric
from .process_models import ProcessSpec, SamplePath, analytic_cdf, analytic_rho, generate_path
from .rng import SeedSpec
from .transform import CdfModel, distributional_transform, empirical_cdf, uniformity_check

__all__ = [
    "TimeGrid",
    "discrete_grid",
    "dyadic_grid",
    "product_sheet_grid",
    "uniform_grid",
    "IndexPoint",
    "PseudoMetricTable",
    "estimate_tau",
    "lambda_metric",
    "ProcessSpec",
    "SamplePath",
    "analytic_cdf",
    "analytic_rho",
    "generate_path",
    "SeedSpec",
    "CdfModel",
    "distributional_transform",
    "empirical_cdf",
    "uniformity_check",
]
