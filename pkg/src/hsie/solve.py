"""Integration of reduced equations along the contour, and closed-form
solution families of the reduced PDEs.

ODEs in t are integrated in the contour parameter s: with y = (x, x', ...),
dy/ds = gamma'(s) dy/dt.  One full transit from the start node returns to
it; the mismatch (holonomy defect) is zero exactly when the solution is
single valued on the contour.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .contour import Circle, Contour, Grid, GridFn, _modes
from .expr import (EvalError, Expr, Num, Var, const, diff_at, eval_expr, is_affine_in,
                   substitute)
from .reduce import OdeIR

__all__ = [
    "SolveError", "StepError", "FamilyError", "OdeProblem", "ContourSolution",
    "initial_from_candidate", "solve_linear_first_order", "solve_ode_rk",
    "homogeneous_basis", "basis_condition", "family_616", "family_617", "solve_613",
    "pde_residual_samples",
]

STEP_TOL = 1e-10
MAX_REFINE = 12


class SolveError(ArithmeticError):
    pass


class StepError(SolveError):
    pass


class FamilyError(ValueError):
    pass


@dataclass(frozen=True)
class OdeProblem:
    """Initial-value problem along a contour.

    ``initial`` holds x, x', ..., x^(s-1) at the start node, one value per
    order of the IR (the free parameters included).
    """

    ir: OdeIR
    contour: Contour = field(default_factory=Circle)
    N: int = 128
    start: int = 0
    initial: tuple[complex, ...] = ()
    subdivision: int = 4

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(complex(v) for v in self.initial))
        Grid(self.N)
        if len(self.initial) != self.ir.order:
            raise ValueError(f"need {self.ir.order} initial values (x .. x^({self.ir.order - 1})), "
                             f"got {len(self.initial)}")
        if self.subdivision < 1:
            raise ValueError("subdivision must be >= 1")
        if not 0 <= self.start < self.N:
            raise ValueError("start node out of range")

    @property
    def grid(self) -> Grid:
        return Grid(self.N)

    @property
    def t0(self) -> complex:
        return complex(self.contour.point(self.grid.s[self.start]))


@dataclass(frozen=True, eq=False)
class ContourSolution:
    x: GridFn
    derivatives: tuple[GridFn, ...]     # x', x'', ... up to order s-1
    holonomy: np.ndarray                # state after one transit minus initial state
    max_step_error: float = 0.0

    def to_csv(self) -> str:
        """Columns j, s_j, Re t, Im t, Re x, Im x, then Re/Im of each derivative."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["j", "s_j", "Re t", "Im t", "Re x", "Im x"]
        for k in range(1, len(self.derivatives) + 1):
            name = "x" + "'" * k
            head += [f"Re {name}", f"Im {name}"]
        w.writerow(head)
        t = self.x.t
        for j, s in enumerate(self.x.grid.s):
            row = [j, f"{s:.17g}", f"{t[j].real:.17g}", f"{t[j].imag:.17g}"]
            for g in (self.x, *self.derivatives):
                row += [f"{g.values[j].real:.17g}", f"{g.values[j].imag:.17g}"]
            w.writerow(row)
        return buf.getvalue()


def initial_from_candidate(candidate: Expr, contour: Contour, N: int, start: int,
                           order: int, var: str = "t") -> tuple[complex, ...]:
    """x, x', ..., x^(order-1) of a candidate at the start node."""
    t0 = complex(contour.point(2 * np.pi * start / N))
    return tuple(complex(diff_at(candidate, var, t0, k, 0.1 * contour.scale))
                 for k in range(order))


# --------------------------------------------------------------------------
# Closed form for x' + p x = q


def _path_offsets(N: int, start: int) -> np.ndarray:
    """Parameter distance travelled from the start node to each node."""
    return (2 * np.pi / N) * ((np.arange(N) - start) % N)


def _spectral_primitive(g: np.ndarray, s0: float, s: np.ndarray, alpha: complex = 0j):
    """Integral from s0 to s of exp(alpha (sigma - s0)) * G(sigma) dsigma, where
    G is the trigonometric interpolant of the periodic samples g."""
    n = len(g)
    c = np.fft.fft(g) / n
    k = _modes(n)
    if n % 2 == 0:
        c[n // 2] = 0
    lam = alpha + 1j * k
    ds = (s - s0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        basis = np.where(lam == 0, ds, (np.exp(lam * ds) - 1) / lam)
    return (basis * np.exp(1j * k * s0)) @ c


def solve_linear_first_order(p_expr: Expr, q_expr: Expr, problem: OdeProblem) -> ContourSolution:
    """x(t) = exp(-P(t)) [x(t0) + integral_t0^t q exp(P)], P = integral_t0^t p,
    with both integrals taken exactly on the trigonometric interpolants of
    the integrands in the contour parameter."""
    contour, grid, j0 = problem.contour, problem.grid, problem.start
    s = grid.s
    s0 = s[j0]
    tau, dtau = contour.nodes(grid)
    pg = np.broadcast_to(eval_expr(p_expr, {"t": tau}), tau.shape) * dtau
    qv = np.broadcast_to(eval_expr(q_expr, {"t": tau}), tau.shape)
    alpha = complex(np.mean(pg))  # loop integral / 2 pi
    path = s0 + np.append(_path_offsets(grid.N, j0), 2 * np.pi)
    P = _spectral_primitive(pg - alpha, s0, path) + alpha * (path - s0)
    big = float(np.max(np.abs(P.real)))
    if big > 700:
        raise OverflowError(f"exponential factor overflows: max |Re integral p| = {big:.1f}")
    # entries 0..N-1 follow node order; the last one closes the loop
    periodic = P[:-1] - alpha * (path[:-1] - s0)
    h = qv * dtau * np.exp(periodic)
    Q = _spectral_primitive(h, s0, path, alpha)
    x0 = problem.initial[0]
    x_path = np.exp(-P) * (x0 + Q)
    x = x_path[:-1]
    xf = GridFn(contour, grid, x)
    dx = GridFn(contour, grid, qv - np.broadcast_to(
        eval_expr(p_expr, {"t": tau}), tau.shape) * x)
    return ContourSolution(xf, (dx,), np.array([x_path[-1] - x0]))


# --------------------------------------------------------------------------
# Runge-Kutta along the contour


def _highest_derivative(ir: OdeIR):
    """Return F(t, y) giving x^(s) from the state y = (x, ..., x^(s-1))."""
    s = ir.order
    if s < 1:
        raise SolveError("nothing to integrate: reduced equation has order 0")
    if ir.linear:
        coeffs, rhs = ir.coeffs, ir.rhs

        def F(t, y):
            sc = {"t": t}
            acc = eval_expr(rhs, sc)
            for k in range(s):
                if coeffs[k] != Num(0):
                    acc -= eval_expr(coeffs[k], sc) * y[k]
            return acc / eval_expr(coeffs[s], sc)
        return F

    top = f"D{s}"
    if not is_affine_in(ir.lhs, top):
        raise SolveError(f"reduced equation is not affine in its highest derivative {top}")
    at0 = substitute(ir.lhs, {top: Num(0)})
    at1 = substitute(ir.lhs, {top: Num(1)})
    rhs = ir.rhs

    def F(t, y):
        sc = {"t": t, "x": y[0]}
        for k in range(1, s):
            sc[f"D{k}"] = y[k]
        b = eval_expr(at0, sc)
        a = eval_expr(at1, sc) - b
        if a == 0:
            raise SolveError(f"coefficient of {top} vanishes at t = {t}")
        return (eval_expr(rhs, sc) - b) / a
    return F


def _rk4(f, s, y, h):
    k1 = f(s, y)
    k2 = f(s + h / 2, y + h / 2 * k1)
    k3 = f(s + h / 2, y + h / 2 * k2)
    k4 = f(s + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate(F, contour: Contour, order: int, y0: np.ndarray, N: int, start: int,
               subdivision: int):
    def rhs(s, y):
        t = complex(contour.point(s))
        dt = complex(contour.tangent(s))
        dy = np.empty_like(y)
        dy[:-1] = y[1:]
        dy[-1] = F(t, y)
        return dt * dy

    H = 2 * np.pi / N
    base = H / subdivision
    hmin = base / 2 ** MAX_REFINE
    states = np.empty((N, order), dtype=complex)
    y = y0.copy()
    s = 2 * np.pi * start / N
    worst = 0.0
    for step in range(N):
        states[(start + step) % N] = y
        end = s + H
        h = base
        while s < end - 1e-14 * H:
            h = min(h, end - s)
            full = _rk4(rhs, s, y, h)
            half = _rk4(rhs, s + h / 2, _rk4(rhs, s, y, h / 2), h / 2)
            err = float(np.max(np.abs(half - full))) / 15
            scale = max(1.0, float(np.max(np.abs(half))))
            if not np.all(np.isfinite(half)):
                err = np.inf
            if err > STEP_TOL * scale:
                if h <= hmin:
                    raise StepError(f"step error {err:.2e} exceeds {STEP_TOL:g} at s = {s:.6f} "
                                    "with maximal subdivision")
                h /= 2
                continue
            worst = max(worst, err)
            y = half + (half - full) / 15
            s += h
            if err < STEP_TOL * scale / 64:
                h = min(2 * h, base)
        s = end
    return states, y - y0, worst


def solve_ode_rk(problem: OdeProblem) -> ContourSolution:
    """Classic RK4 with step doubling in the contour parameter."""
    ir = problem.ir
    F = _highest_derivative(ir)
    y0 = np.array(problem.initial, dtype=complex)
    try:
        states, defect, worst = _integrate(F, problem.contour, ir.order, y0, problem.N,
                                           problem.start, problem.subdivision)
    except EvalError as err:
        raise SolveError(f"right-hand side not evaluable along the contour: {err}") from err
    grid = problem.grid
    fns = [GridFn(problem.contour, grid, states[:, k]) for k in range(ir.order)]
    return ContourSolution(fns[0], tuple(fns[1:]), defect, worst)


def homogeneous_basis(ir: OdeIR, problem: OdeProblem) -> list[ContourSolution]:
    """Solutions of the homogeneous linear equation from the canonical unit
    initial vectors; ``problem`` supplies contour, grid, start node and
    subdivision (its initial values are ignored)."""
    if not ir.linear:
        raise SolveError("homogeneous basis requires a linear IR")
    hom = OdeIR("linear", ir.order, Num(0), ir.coeffs, r=ir.r)
    out = []
    for i in range(ir.order):
        e = tuple(1.0 if k == i else 0.0 for k in range(ir.order))
        out.append(solve_ode_rk(OdeProblem(hom, problem.contour, problem.N, problem.start,
                                           e, problem.subdivision)))
    return out


def basis_condition(basis: list[ContourSolution]) -> float:
    """Condition number of the state matrix after one transit."""
    rows = []
    for sol in basis:
        init = np.zeros(len(basis), dtype=complex)
        j0 = 0
        for k, g in enumerate((sol.x, *sol.derivatives)):
            init[k] = g.values[j0]
        rows.append(init + sol.holonomy)
    return float(np.linalg.cond(np.array(rows)))


# --------------------------------------------------------------------------
# Closed-form families for the reduced PDEs


def _probe_points(contours):
    s = 2 * np.pi * np.arange(4) / 4 + 0.1
    p1 = contours[0].point(s)
    p2 = contours[1].point(s + 0.05)
    return [(complex(a), complex(b)) for a in p1 for b in p2]


def pde_residual_samples(x: Expr, k: complex, n: int, contours) -> np.ndarray:
    """x_t1t1 + x_t2t2 - k x^n at 16 points of gamma1 x gamma2 via Cauchy derivatives."""
    out = []
    for t1, t2 in _probe_points(contours):
        r1 = 0.1 * contours[0].scale
        r2 = 0.1 * contours[1].scale
        x11 = diff_at(x, "t1", t1, 2, r1, {"t2": t2})
        x22 = diff_at(x, "t2", t2, 2, r2, {"t1": t1})
        xv = eval_expr(x, {"t1": t1, "t2": t2})
        out.append(x11 + x22 - k * xv ** n)
    return np.array(out)


def _affine_zero_in_domain(A: complex, B: complex, C: complex, contours) -> bool:
    c1, c2 = contours
    if isinstance(c1, Circle) and isinstance(c2, Circle):
        centre = A * c1.center + B * c2.center + C
        return abs(centre) <= abs(A) * c1.radius + abs(B) * c2.radius
    g = Grid(64)
    t1 = c1.point(g.s)[:, None]
    t2 = c2.point(g.s)[None, :]
    return bool(np.any(np.abs(A * t1 + B * t2 + C) < 1e-12))


def _assert_residual(x: Expr, k, n, contours, tol=1e-8):
    res = pde_residual_samples(x, k, n, contours)
    worst = float(np.max(np.abs(res)))
    if not worst <= tol:
        raise FamilyError(f"constructed solution fails the PDE: residual {worst:.3e}")


def family_616(A: complex, k: complex, n: int, C: complex, sign: int = 1,
               contours=None) -> Expr:
    """(A t1 + B t2 + C)^(2/(1-n)) solving x_t1t1 + x_t2t2 = k x^n, with
    A^2 + B^2 = k (1-n)^2 / (2 (n+1))."""
    if n < 2:
        raise FamilyError("n must be >= 2")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    contours = contours or (Circle(), Circle())
    B = sign * np.sqrt(complex(k * (1 - n) ** 2 / (2 * (n + 1)) - A * A))
    B = complex(B)
    if _affine_zero_in_domain(complex(A), B, complex(C), contours):
        raise FamilyError("A t1 + B t2 + C vanishes in the working domain")
    t1, t2 = Var("t1"), Var("t2")
    base = const(B) * t2 + const(C) if A == 0 else const(A) * t1 + const(B) * t2 + const(C)
    x = base ** const(2 / (1 - n))
    _assert_residual(x, k, n, contours)
    return x


def family_617(k: complex, n: int, C1: complex, C2: complex, contours=None) -> Expr:
    """s [(t1 + C1)^2 + (t2 + C2)^2]^(1/(1-n)), s = [k (1-n)^2 / 4]^(1/(1-n))."""
    if n < 2:
        raise FamilyError("n must be >= 2")
    contours = contours or (Circle(), Circle())
    C1, C2 = complex(C1), complex(C2)
    for sgn in (1j, -1j):
        if _affine_zero_in_domain(1, sgn, C1 + sgn * C2, contours):
            raise FamilyError("(t1 + C1)^2 + (t2 + C2)^2 vanishes in the working domain")
    scale = complex(np.power(complex(k * (1 - n) ** 2 / 4), 1 / (1 - n)))
    t1, t2 = Var("t1"), Var("t2")
    quad = (t1 + const(C1)) ** Num(2) + (t2 + const(C2)) ** Num(2)
    x = const(scale) * quad ** const(1 / (1 - n))
    _assert_residual(x, k, n, contours)
    return x


def solve_613(a: complex, b: complex, c: complex, contours=None) -> Expr:
    """X = (b/2) t1^2 + c t1 - a t2 solving a X_t1 + (b t1 + c) X_t2 = 0."""
    if a == 0 and b == 0 and c == 0:
        raise FamilyError("degenerate equation: a = b = c = 0")
    contours = contours or (Circle(), Circle())
    t1, t2 = Var("t1"), Var("t2")
    X = const(b / 2) * t1 ** Num(2) + const(c) * t1 - const(a) * t2
    worst = 0.0
    for p1, p2 in _probe_points(contours):
        x1 = diff_at(X, "t1", p1, 1, 0.1 * contours[0].scale, {"t2": p2})
        x2 = diff_at(X, "t2", p2, 1, 0.1 * contours[1].scale, {"t1": p1})
        worst = max(worst, abs(a * x1 + (b * p1 + c) * x2))
    if worst > 1e-12:
        raise FamilyError(f"constructed solution fails the PDE: residual {worst:.3e}")
    return X
