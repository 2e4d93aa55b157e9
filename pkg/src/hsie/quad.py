"""Singular and hypersingular integrals over closed contours.

All "normalised" operators return

    (1/(pi i)) * FP integral_L x(tau) / (tau - t)^p dtau

at grid nodes t = gamma(s_i).  The density is split into its Taylor
polynomial of degree p-1 about t plus a remainder R(tau) = O((tau-t)^p):

* the remainder integrand R/(tau-t)^p is smooth and periodic and is summed
  with the trapezoidal rule, the singular node receiving its limit
  x^(p)(t)/p! * gamma'(s_i);
* the subtracted monomials contribute pi*i for (tau-t)^-1 and nothing for
  higher negative powers (finite part on a closed contour).

Taylor coefficients are contour derivatives from the spectral machinery.
:func:`fp_limit_oracle` computes the same quantities independently by the
symmetric-excision limit with Gauss-Legendre panels and extrapolation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .contour import Contour, Grid, GridFn, GridFn2, N_MAX, _diff_t, sample
from .expr import Expr, eval_expr

__all__ = [
    "QuadratureError", "OracleError", "ProximityWarning",
    "SingularIntegralSpec", "QuadResult", "PlemeljReport", "Plemelj2DReport",
    "pv_integral", "fp_integral", "fp_integral_all", "fp_integral_kernel_all",
    "fp_integral_checked", "fp_monomial", "fp_limit_oracle", "cauchy_integral",
    "fp_integral_2d", "fp_integral_2d_all", "fp_integral_axis", "plemelj_check", "plemelj_check_2d",
    "upsample",
]

PI_I = np.pi * 1j
DEFAULT_SCHEDULE = tuple(0.3 * 2.0 ** -k for k in range(8))
_ROW_BLOCK = 256


class QuadratureError(ArithmeticError):
    pass


class OracleError(QuadratureError):
    pass


class ProximityWarning(UserWarning):
    """Evaluation point too close to the contour for the trapezoidal rule."""


@dataclass(frozen=True)
class SingularIntegralSpec:
    density: GridFn
    p: int
    node: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("singularity order p must be >= 1")
        if not 0 <= self.node < self.density.grid.N:
            raise ValueError(f"node index {self.node} out of range")


@dataclass(frozen=True)
class QuadResult:
    value: complex
    n: int
    converged: bool


# --------------------------------------------------------------------------
# 1-D finite-part operator


def _taylor_rows(density_rows, derivs, tau, dtau, rows, h, p):
    """Normalised finite part at nodes ``rows``.

    density_rows : (len(rows), N) array, row r is the density used for node rows[r]
    derivs       : list of p+1 arrays (len(rows),), contour derivatives of
                   that density at the singular node
    """
    t = tau[rows]
    delta = tau[None, :] - t[:, None]
    own = (np.arange(len(rows)), rows)
    delta[own] = 1.0
    taylor = np.zeros_like(density_rows)
    power = np.ones_like(delta)
    for k in range(p):
        taylor += derivs[k][:, None] / math.factorial(k) * power
        power = power * delta
    g = (density_rows - taylor) / power * dtau[None, :]
    g[own] = derivs[p] / math.factorial(p) * dtau[rows]
    return h * g.sum(axis=1) / PI_I + derivs[p - 1] / math.factorial(p - 1)


def _fp_shared(values: np.ndarray, tau, dtau, h, p, rows=None, check=True) -> np.ndarray:
    n = len(values)
    rows = np.arange(n) if rows is None else np.atleast_1d(rows)
    derivs = [values]
    for k in range(1, p + 1):
        derivs.append(_diff_t(derivs[-1], dtau, 1, check=check and k == 1))
    out = np.empty(len(rows), dtype=complex)
    for b in range(0, len(rows), _ROW_BLOCK):
        blk = rows[b:b + _ROW_BLOCK]
        dens = np.broadcast_to(values, (len(blk), n))
        out[b:b + _ROW_BLOCK] = _taylor_rows(dens, [d[blk] for d in derivs],
                                             tau, dtau, blk, h, p)
    return out


def fp_integral_all(f: GridFn, p: int) -> GridFn:
    """Normalised finite-part integral of order ``p`` at every node."""
    if p < 1:
        raise ValueError("p must be >= 1")
    tau, dtau = f.contour.nodes(f.grid)
    return f.with_values(_fp_shared(f.values, tau, dtau, f.grid.h, p))


def fp_integral(spec: SingularIntegralSpec) -> complex:
    """(1/(pi i)) FP integral x(tau)/(tau-t)^p dtau at the node of ``spec``."""
    f = spec.density
    tau, dtau = f.contour.nodes(f.grid)
    return complex(_fp_shared(f.values, tau, dtau, f.grid.h, spec.p, rows=[spec.node])[0])


def pv_integral(spec: SingularIntegralSpec) -> complex:
    """(1/(pi i)) PV integral x(tau)/(tau-t) dtau; the p = 1 case of
    :func:`fp_integral` (same code path)."""
    if spec.p != 1:
        raise ValueError("pv_integral requires p = 1")
    return fp_integral(spec)


def fp_integral_kernel_all(f: GridFn, kernel: Expr, p: int,
                           vars=("t", "tau")) -> GridFn:
    """Normalised finite part of h(t, tau) x(tau) / (tau - t)^p at every node t."""
    tau, dtau = f.contour.nodes(f.grid)
    n = f.grid.N
    h = eval_expr(kernel, {vars[0]: tau[:, None], vars[1]: tau[None, :]})
    dens = np.broadcast_to(np.asarray(h, dtype=complex), (n, n)) * f.values[None, :]
    derivs = [dens]
    for k in range(1, p + 1):
        derivs.append(_diff_t(derivs[-1], dtau, 1, axis=1, check=k == 1))
    idx = np.arange(n)
    diag = [d[idx, idx] for d in derivs]
    out = np.empty(n, dtype=complex)
    for b in range(0, n, _ROW_BLOCK):
        blk = idx[b:b + _ROW_BLOCK]
        out[b:b + _ROW_BLOCK] = _taylor_rows(dens[blk], [d[blk] for d in diag],
                                             tau, dtau, blk, f.grid.h, p)
    return f.with_values(out)


def fp_integral_checked(density: Expr, contour: Contour, N: int, p: int, node: int,
                        var: str = "t", rtol: float = 1e-8, strict: bool = False) -> QuadResult:
    """Finite part of an expression density with an N versus 2N convergence check.

    Node ``node`` of the N grid coincides with node ``2*node`` of the 2N grid.
    """
    coarse = fp_integral(SingularIntegralSpec(sample(contour, Grid(N), density, var), p, node))
    fine_n = 2 * N
    if fine_n > N_MAX:
        return QuadResult(coarse, N, True)
    fine = fp_integral(SingularIntegralSpec(sample(contour, Grid(fine_n), density, var),
                                            p, 2 * node))
    ok = abs(fine - coarse) <= rtol * max(1.0, abs(fine))
    if strict and not ok:
        raise QuadratureError(f"finite part did not converge between N={N} and N={fine_n}: "
                              f"|difference| = {abs(fine - coarse):.3e}")
    return QuadResult(fine, fine_n, bool(ok))


def fp_monomial(contour: Contour, node: int, m: int) -> complex:
    """Finite part of the (unnormalised) integral of (tau - t)^-m over a closed
    smooth contour: pi*i for m = 1, zero for m >= 2."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return PI_I if m == 1 else 0j


# --------------------------------------------------------------------------
# Independent oracle: symmetric excision limit


_GL_X, _GL_W = np.polynomial.legendre.leggauss(30)


def _panels(v: float, cap: float = 0.25) -> list[tuple[float, float]]:
    edges = [v]
    while edges[-1] < np.pi:
        step = min(edges[-1], cap)
        edges.append(min(edges[-1] + step, np.pi))
    return list(zip(edges[:-1], edges[1:]))


def _excised_integral(integrand: Expr, contour: Contour, p: int, s0: float, v: float,
                      var: str) -> complex:
    """Integral of x(tau)/(tau-t)^p over the contour with the parameter arc
    |s - s0| < v removed."""
    t = complex(contour.point(s0))
    us, ws = [], []
    for a, b in _panels(v):
        us.append(0.5 * (b - a) * _GL_X + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * _GL_W)
    u = np.concatenate(us)
    w = np.concatenate(ws)
    total = 0j
    for sgn in (1.0, -1.0):
        s = s0 + sgn * u
        tau = contour.point(s)
        x = np.broadcast_to(eval_expr(integrand, {var: tau}), tau.shape)
        total += np.sum(w * x * contour.tangent(s) / (tau - t) ** p)
    return complex(total)


def _extrapolate(vs: np.ndarray, vals: np.ndarray, p: int, order: int = 3) -> complex:
    # I(v) = sum_{even m <= p} C_m v^(1-m) + I0 + sum_{q<=order} d_q v^(2q-1)
    powers = [1 - m for m in range(2, p + 1, 2)] + [0] + [2 * q - 1 for q in range(1, order + 1)]
    A = np.stack([vs ** e for e in powers], axis=1).astype(complex)
    scale = np.linalg.norm(A, axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, vals, rcond=None)
    return complex(coef[powers.index(0)] / scale[powers.index(0)])


def fp_limit_oracle(integrand: Expr, contour: Contour, p: int, node: int, N: int,
                    schedule=DEFAULT_SCHEDULE, var: str = "t", normalize: bool = False,
                    tol: float = 1e-6) -> complex:
    """Hadamard finite part as the limit of excised integrals.

    The integral over the contour minus the symmetric parameter arc of
    half-width v is computed by composite Gauss-Legendre quadrature on panels
    graded towards the singular point.  Its expansion in v has the divergent
    terms C_m v^(1-m) (even m <= p; these make up xi(v)/v^(p-1)), the finite
    part, and odd powers of v; the coefficients are fitted over ``schedule``
    and the constant term returned.

    The singular point is node ``node`` of an ``N``-point grid.  With
    ``normalize`` the result is divided by pi*i.

    Raises
    ------
    OracleError
        If dropping either end of the schedule changes the extrapolated value
        by more than ``tol`` (relative to max(1, |value|)).
    """
    vs = np.asarray(schedule, dtype=float)
    if len(vs) < 4 or np.any(np.diff(vs) >= 0) or np.any(vs <= 0):
        raise ValueError("schedule must be >= 4 strictly decreasing positive values")
    s0 = 2 * np.pi * node / N
    vals = np.array([_excised_integral(integrand, contour, p, s0, v, var) for v in vs])
    best = _extrapolate(vs, vals, p)
    alt = [_extrapolate(vs[1:], vals[1:], p), _extrapolate(vs[:-1], vals[:-1], p)]
    spread = max(abs(a - best) for a in alt)
    if spread > tol * max(1.0, abs(best)):
        raise OracleError(f"excision limit not converging (spread {spread:.2e})")
    return best / PI_I if normalize else best


# --------------------------------------------------------------------------
# Cauchy-type integrals and Plemelj limits


def cauchy_integral(f: GridFn, z: complex) -> complex:
    """(1/(2 pi i)) integral f(tau)/(tau - z) dtau for z off the contour."""
    tau, dtau = f.contour.nodes(f.grid)
    near = 3 * f.grid.h * float(np.max(np.abs(dtau)))
    d = float(np.min(np.abs(tau - z)))
    if d == 0:
        raise QuadratureError("evaluation point lies on the contour")
    if d < near:
        warnings.warn(f"point at distance {d:.2e} from the contour (< {near:.2e}); "
                      "trapezoidal accuracy degraded", ProximityWarning, stacklevel=2)
    return complex(f.grid.h * np.sum(f.values * dtau / (tau - z)) / (2 * PI_I))


def upsample(values: np.ndarray, n_fine: int, axis: int = -1) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto a finer uniform grid."""
    n = values.shape[axis]
    if n_fine == n:
        return values
    c = np.fft.fft(values, axis=axis)
    c = np.moveaxis(c, axis, -1)
    out = np.zeros(c.shape[:-1] + (n_fine,), dtype=complex)
    half = n // 2
    out[..., :half] = c[..., :half]
    out[..., -half:] = c[..., -half:]
    # split the Nyquist mode symmetrically
    out[..., half] = 0.5 * c[..., half]
    out[..., -half] = 0.5 * c[..., half]
    out = np.fft.ifft(out, axis=-1) * (n_fine / n)
    return np.moveaxis(out, -1, axis)


def _fine_size(contour: Contour, offset: float, n: int) -> int:
    need = 40 * contour.scale / offset
    nf = n
    while nf < need and nf < N_MAX:
        nf *= 2
    return nf


def _cauchy_weights(tau, dtau, h, z):
    return h * dtau / (tau - z) / (2 * PI_I)


def _extrap_linear(offsets, vals):
    (d1, d2), (v1, v2) = offsets, vals
    return (d1 * v2 - d2 * v1) / (d1 - d2)


@dataclass(frozen=True)
class PlemeljReport:
    jump_deviation: float        # max |Phi+ - Phi- - f|
    sum_deviation: float         # max |Phi+ + Phi- - S f|
    exterior_max: float          # max |Phi-|
    max_deviation: float
    nodes: tuple[int, ...]


def plemelj_check(f: GridFn, offsets=(1e-2, 5e-3), nodes=None) -> PlemeljReport:
    """Boundary values of the Cauchy-type integral of ``f`` from both sides,
    linearly extrapolated in the normal offset, compared with f and with the
    principal-value operator."""
    if len(offsets) != 2 or offsets[0] == offsets[1]:
        raise ValueError("need two distinct offsets")
    n = f.grid.N
    nodes = np.arange(n) if nodes is None else np.asarray(nodes)
    nf = _fine_size(f.contour, min(offsets), n)
    fine_grid = Grid(nf)
    ftau, fdtau = f.contour.nodes(fine_grid)
    fvals = upsample(f.values, nf)
    t = f.t[nodes]
    normal = f.contour.outward_normal(f.grid.s[nodes])

    def side(sign):
        out = []
        for d in offsets:
            z = t - sign * d * normal
            W = _cauchy_weights(ftau[None, :], fdtau[None, :], fine_grid.h, z[:, None])
            out.append(W @ fvals)
        return _extrap_linear(offsets, out)

    plus, minus = side(+1), side(-1)
    pv = fp_integral_all(f, 1).values[nodes]
    jump = float(np.max(np.abs(plus - minus - f.values[nodes])))
    summ = float(np.max(np.abs(plus + minus - pv)))
    return PlemeljReport(jump, summ, float(np.max(np.abs(minus))), max(jump, summ),
                         tuple(int(j) for j in nodes))


# --------------------------------------------------------------------------
# Two-dimensional (tensor product) operators


def _fp_axis(values: np.ndarray, contour: Contour, grid: Grid, p: int, axis: int,
             rows=None) -> np.ndarray:
    tau, dtau = contour.nodes(grid)
    moved = np.moveaxis(values, axis, 0)
    cols = [_fp_shared(moved[:, k], tau, dtau, grid.h, p, rows=rows, check=False)
            for k in range(moved.shape[1])]
    return np.moveaxis(np.stack(cols, axis=1), 0, axis)


def fp_integral_axis(f: GridFn2, p: int, axis: int) -> GridFn2:
    """One-variable normalised finite part in t1 (axis 0) or t2 (axis 1),
    applied line by line."""
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    return f.with_values(_fp_axis(f.values, f.contours[axis], f.grids[axis], p, axis))


def fp_integral_2d_all(f: GridFn2, p: int) -> GridFn2:
    """-(1/pi^2) FP double integral x / ((tau1-t1)^p (tau2-t2)^p) at every node
    pair, as the iterated normalised one-dimensional operator."""
    step = _fp_axis(f.values, f.contours[0], f.grids[0], p, axis=0)
    return f.with_values(_fp_axis(step, f.contours[1], f.grids[1], p, axis=1))


def fp_integral_2d(f: GridFn2, p: int, nodes: tuple[int, int]) -> complex:
    j1, j2 = nodes
    line = _fp_axis(f.values, f.contours[0], f.grids[0], p, axis=0, rows=[j1])  # (1, N2)
    tau2, dtau2 = f.contours[1].nodes(f.grids[1])
    return complex(_fp_shared(line[0], tau2, dtau2, f.grids[1].h, p, rows=[j2])[0])


@dataclass(frozen=True)
class Plemelj2DReport:
    upper_64: float      # Phi++ + Phi+- + Phi-+ + Phi-- versus S12 f
    lower_64: float      # Phi++ - Phi+- - Phi-+ + Phi-- versus f
    upper_65: float      # Phi++ - Phi+- + Phi-+ - Phi-- versus S1 f
    lower_65: float      # Phi++ + Phi+- - Phi-+ - Phi-- versus S2 f
    max_deviation: float
    nodes: tuple[tuple[int, int], ...]


def plemelj_check_2d(f: GridFn2, offsets=(1e-2, 5e-3), nodes=None) -> Plemelj2DReport:
    """Four-way boundary values of the double Cauchy-type integral at selected
    node pairs, compared with the tensor-product singular operators."""
    n1, n2 = f.grids[0].N, f.grids[1].N
    if nodes is None:
        rng = np.random.default_rng(0)
        nodes = list(zip(rng.integers(0, n1, 8), rng.integers(0, n2, 8)))
    nodes = [(int(a), int(b)) for a, b in nodes]
    c1, c2 = f.contours
    nf1 = _fine_size(c1, min(offsets), n1)
    nf2 = _fine_size(c2, min(offsets), n2)
    g1, g2 = Grid(nf1), Grid(nf2)
    tau1, dtau1 = c1.nodes(g1)
    tau2, dtau2 = c2.nodes(g2)
    fine2 = upsample(f.values, nf2, axis=1)  # (n1, nf2)

    def phi(z1, z2):
        col = fine2 @ _cauchy_weights(tau2, dtau2, g2.h, z2)
        return upsample(col, nf1) @ _cauchy_weights(tau1, dtau1, g1.h, z1)

    s12 = fp_integral_2d_all(f, 1).values
    s1 = _fp_axis(f.values, c1, f.grids[0], 1, axis=0)
    s2 = _fp_axis(f.values, c2, f.grids[1], 1, axis=1)
    devs = np.zeros((len(nodes), 4))
    for row, (j1, j2) in enumerate(nodes):
        sa, sb = f.grids[0].s[j1], f.grids[1].s[j2]
        t1, t2 = c1.point(sa), c2.point(sb)
        n1v, n2v = c1.outward_normal(sa), c2.outward_normal(sb)
        lim = {}
        for e1 in (+1, -1):
            for e2 in (+1, -1):
                vals = [phi(t1 - e1 * d * n1v, t2 - e2 * d * n2v) for d in offsets]
                lim[e1, e2] = _extrap_linear(offsets, vals)
        pp, pm, mp, mm = lim[1, 1], lim[1, -1], lim[-1, 1], lim[-1, -1]
        devs[row] = [abs(pp + pm + mp + mm - s12[j1, j2]),
                     abs(pp - pm - mp + mm - f.values[j1, j2]),
                     abs(pp - pm + mp - mm - s1[j1, j2]),
                     abs(pp + pm - mp - mm - s2[j1, j2])]
    worst = devs.max(axis=0)
    return Plemelj2DReport(*map(float, worst), float(worst.max()), tuple(nodes))
