"""Hypersingular and bihypersingular integral equations on closed contours,
reduced to differential equations and checked against direct quadrature."""

from .contour import (Circle, CustomPeriodic, Grid, GridFn, GridFn2, sample, sample2,
                      spectral_derivative, validate_analyticity)
from .expr import ParseError, diff_at, eval_expr, parse_expr, to_string
from .quad import (SingularIntegralSpec, cauchy_integral, fp_integral, fp_integral_2d,
                   fp_limit_oracle, fp_monomial, pv_integral)
from .reduce import (HsieTerm, NonlinearEquation, OneDimEquation, TwoDimEquation,
                     reduce_bi, reduce_linear, reduce_nonlinear)
from .solve import (OdeProblem, family_616, family_617, homogeneous_basis, solve_613,
                    solve_linear_first_order, solve_ode_rk)
from .verify import ResidualReport, residual_1d, residual_2d, residual_reduced

__version__ = "0.1.0"

__all__ = [
    "Circle", "CustomPeriodic", "Grid", "GridFn", "GridFn2", "sample", "sample2",
    "spectral_derivative", "validate_analyticity",
    "ParseError", "diff_at", "eval_expr", "parse_expr", "to_string",
    "SingularIntegralSpec", "cauchy_integral", "fp_integral", "fp_integral_2d",
    "fp_limit_oracle", "fp_monomial", "pv_integral",
    "HsieTerm", "NonlinearEquation", "OneDimEquation", "TwoDimEquation",
    "reduce_bi", "reduce_linear", "reduce_nonlinear",
    "OdeProblem", "family_616", "family_617", "homogeneous_basis", "solve_613",
    "solve_linear_first_order", "solve_ode_rk",
    "ResidualReport", "residual_1d", "residual_2d", "residual_reduced",
]
