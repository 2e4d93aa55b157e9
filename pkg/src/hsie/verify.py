"""Residual checks of candidate solutions.

A candidate is substituted twice: into the integral equation, with every
singular term evaluated by quadrature, and into the reduced differential
equation, with spectral derivatives.  Agreement of the two residuals is the
equivalence of the two formulations at the collocation nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contour import (Contour, Grid, GridFn, GridFn2, partial_derivative, sample, sample2,
                      spectral_derivative, validate_analyticity)
from .expr import Expr, Num, eval_expr
from .quad import fp_integral_2d_all, fp_integral_all, fp_integral_axis, fp_integral_kernel_all
from .reduce import (NonlinearEquation, OdeIR, OneDimEquation, PdeIR, TwoDimEquation,
                     reduce_bi, reduce_linear, reduce_nonlinear)

__all__ = ["VerificationError", "ResidualReport", "residual_1d", "residual_2d",
           "residual_reduced", "DEFAULT_TOLERANCE"]

DEFAULT_TOLERANCE = 1e-6


class VerificationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ResidualReport:
    equation: str
    N: int
    residuals: np.ndarray        # |LHS - RHS| per node, flattened in 2-D
    max: float
    mean: float
    tolerance: float
    passed: bool
    cross_check_gap: float | None = None
    signed: np.ndarray | None = None     # LHS - RHS before taking magnitudes

    @classmethod
    def build(cls, equation: str, N: int, res: np.ndarray, tolerance: float,
              gap: float | None = None) -> ResidualReport:
        signed = np.asarray(res).ravel()
        mag = np.abs(signed)
        worst = float(np.max(mag))
        return cls(equation, N, mag, worst, float(np.mean(mag)), tolerance,
                   bool(worst <= tolerance), gap, signed)

    def to_json(self, per_node: bool = False) -> dict:
        out = {"equation": self.equation, "N": self.N, "max": self.max, "mean": self.mean,
               "tolerance": self.tolerance, "passed": self.passed,
               "cross_check_gap": self.cross_check_gap}
        if per_node:
            out["residuals"] = [float(r) for r in self.residuals]
        return out


def _eval_on(e: Expr, scope: dict, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(eval_expr(e, scope), dtype=complex), shape)


def _candidate_1d(candidate, contour: Contour, N: int) -> GridFn:
    if isinstance(candidate, GridFn):
        return candidate
    return sample(contour, Grid(N), candidate)


def _derivs(x: GridFn, order: int) -> list[np.ndarray]:
    out = [x.values]
    for _ in range(order):
        out.append(spectral_derivative(x.with_values(out[-1]), 1).values)
    return out


def _require_analytic_domain(contour: Contour) -> None:
    check = validate_analyticity(contour)
    if not check:
        raise VerificationError(f"excluded points inside the contour: {list(check.offending)}")


def _ode_residual(ir: OdeIR, x: GridFn) -> np.ndarray:
    t = x.t
    d = _derivs(x, ir.order)
    if ir.linear:
        res = -_eval_on(ir.rhs, {"t": t}, t.shape)
        for k, c in enumerate(ir.coeffs):
            if c != Num(0):
                res = res + _eval_on(c, {"t": t}, t.shape) * d[k]
        return res
    scope = {"t": t, "x": d[0], **{f"D{k}": d[k] for k in range(1, ir.order + 1)}}
    return _eval_on(ir.lhs, scope, t.shape) - _eval_on(ir.rhs, {"t": t}, t.shape)


def residual_1d(eq, candidate, N: int = 128, tolerance: float = DEFAULT_TOLERANCE,
                name: str | None = None) -> ResidualReport:
    """Residual of a one-dimensional linear or nonlinear equation.

    ``candidate`` is an expression in ``t`` or a :class:`GridFn` on the
    equation's contour.  The report's cross-check gap compares with the
    residual of the reduced ODE.
    """
    _require_analytic_domain(eq.contour)
    x = _candidate_1d(candidate, eq.contour, N)
    t = x.t
    if isinstance(eq, OneDimEquation):
        top = max(t_.l for t_ in eq.terms)
        d = _derivs(x, top)
        res = -_eval_on(eq.rhs, {"t": t}, t.shape)
        for term in eq.terms:
            coeff = _eval_on(term.coeff, {"t": t}, t.shape)
            dens = x.with_values(d[term.l])
            if term.p == 0:
                val = dens.values
            elif term.kernel is None:
                val = fp_integral_all(dens, term.p).values
            else:
                val = fp_integral_kernel_all(dens, term.kernel, term.p).values
            res = res + coeff * val
        ir = reduce_linear(eq)
        label = "linear"
    elif isinstance(eq, NonlinearEquation):
        scope = {"t": t, "x": x.values}
        for k in range(1, eq.p + 1):
            scope[f"S{k}"] = fp_integral_all(x, k).values
        res = _eval_on(eq.lhs, scope, t.shape) - _eval_on(eq.rhs, {"t": t}, t.shape)
        ir = reduce_nonlinear(eq)
        label = "nonlinear"
    else:
        raise TypeError(f"unsupported equation type {type(eq).__name__}")
    gap = float(np.max(np.abs(res - _ode_residual(ir, x))))
    return ResidualReport.build(name or label, x.grid.N, res, tolerance, gap)


def _candidate_2d(candidate, contours, N: int) -> GridFn2:
    if isinstance(candidate, GridFn2):
        return candidate
    return sample2(contours, (Grid(N), Grid(N)), candidate)


def _mesh_scope(X: GridFn2) -> dict:
    return {"t1": X.contours[0].point(X.grids[0].s)[:, None],
            "t2": X.contours[1].point(X.grids[1].s)[None, :], "x": X.values}


def _pde_residual(ir: PdeIR, X: GridFn2) -> np.ndarray:
    q = ir.q
    scope = _mesh_scope(X)
    shape = X.values.shape
    d1 = partial_derivative(X, 0, q)
    terms = [(ir.a, X.values), (ir.b, d1.values),
             (ir.c, partial_derivative(X, 1, q).values),
             (ir.d, partial_derivative(d1, 1, q).values if ir.d != Num(0) else None)]
    res = -_eval_on(ir.f, scope, shape)
    for coeff, val in terms:
        if coeff != Num(0):
            res = res + _eval_on(coeff, scope, shape) * val
    return res


def residual_2d(eq: TwoDimEquation, candidate, N: int = 64,
                tolerance: float = DEFAULT_TOLERANCE, name: str | None = None) -> ResidualReport:
    """Residual of a bihypersingular equation on the N x N node grid."""
    for c in eq.contours:
        _require_analytic_domain(c)
    X = _candidate_2d(candidate, eq.contours, N)
    scope = _mesh_scope(X)
    shape = X.values.shape
    res = -_eval_on(eq.f, scope, shape)
    if eq.a != Num(0):
        res = res + _eval_on(eq.a, scope, shape) * X.values
    for coeff, op in ((eq.b, lambda: fp_integral_axis(X, eq.p, 0)),
                      (eq.c, lambda: fp_integral_axis(X, eq.p, 1)),
                      (eq.d, lambda: fp_integral_2d_all(X, eq.p))):
        if coeff != Num(0):
            res = res + _eval_on(coeff, scope, shape) * op().values
    gap = None
    if not eq.drop_factorials:
        gap = float(np.max(np.abs(res - _pde_residual(reduce_bi(eq), X))))
    return ResidualReport.build(name or "bi", X.grids[0].N, res, tolerance, gap)


def residual_reduced(ir, candidate, contours=None, N: int | None = None,
                     tolerance: float = DEFAULT_TOLERANCE,
                     name: str | None = None) -> ResidualReport:
    """Residual of a reduced ODE (``contours`` a single contour) or PDE
    (a pair of contours) with spectral derivatives."""
    if isinstance(ir, OdeIR):
        if isinstance(contours, (tuple, list)):
            contours = contours[0]
        if contours is None and not isinstance(candidate, GridFn):
            raise ValueError("a contour is required for expression candidates")
        x = _candidate_1d(candidate, contours, N or 128)
        return ResidualReport.build(name or "ode", x.grid.N, _ode_residual(ir, x), tolerance)
    if isinstance(ir, PdeIR):
        if contours is None and not isinstance(candidate, GridFn2):
            raise ValueError("two contours are required for expression candidates")
        X = _candidate_2d(candidate, contours, N or 64)
        return ResidualReport.build(name or "pde", X.grids[0].N, _pde_residual(ir, X), tolerance)
    raise TypeError(f"unsupported IR type {type(ir).__name__}")
