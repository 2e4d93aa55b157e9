"""Smooth closed contours with spectral calculus on uniform parameter grids.

A contour is a 2*pi-periodic map s -> gamma(s), positively oriented.  Grid
functions hold samples x(gamma(s_j)) at s_j = 2*pi*j/N; derivatives with
respect to the complex variable t are taken in Fourier space in s and
converted with the chain rule dx/dt = (dx/ds) / gamma'(s).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .expr import EvalError, Expr, eval_expr, to_string

__all__ = [
    "Contour", "Circle", "CustomPeriodic", "Grid", "GridFn", "GridFn2",
    "AliasingWarning", "AnalyticityCheck",
    "contour_from_json", "sample", "sample2", "spectral_derivative",
    "partial_derivative", "diff_periodic", "fourier_coeffs",
    "from_fourier_coeffs", "validate_analyticity", "winding_number",
]

N_MIN, N_MAX = 16, 4096
MAX_ORDER = 8
NOISE_FLOOR = np.finfo(float).eps


class AliasingWarning(UserWarning):
    """Samples are not resolved: the top third of the spectrum carries energy."""


class SampleError(EvalError):
    def __init__(self, message: str, node: int):
        self.node = node
        super().__init__(f"{message} (node {node})")


def _pair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _unpair(p) -> complex:
    if isinstance(p, (int, float)):
        return complex(p)
    if len(p) != 2:
        raise ValueError(f"expected [re, im], got {p!r}")
    return complex(float(p[0]), float(p[1]))


class Contour:
    """Positively oriented smooth closed curve gamma: [0, 2*pi) -> C."""

    excluded: tuple[complex, ...]

    def point(self, s):
        raise NotImplementedError

    def tangent(self, s):
        """gamma'(s)."""
        raise NotImplementedError

    @property
    def scale(self) -> float:
        """Characteristic size, used for default derivative radii."""
        raise NotImplementedError

    def nodes(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        s = grid.s
        return self.point(s), self.tangent(s)

    def outward_normal(self, s):
        d = self.tangent(s)
        return -1j * d / np.abs(d)

    def inside(self, z) -> bool:
        raise NotImplementedError

    def distance(self, z, n: int = 2048) -> float:
        pts = self.point(np.linspace(0, 2 * np.pi, n, endpoint=False))
        return float(np.min(np.abs(pts - z)))

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Circle(Contour):
    center: complex = 0j
    radius: float = 0.5
    excluded: tuple[complex, ...] = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "excluded", tuple(complex(z) for z in self.excluded))

    def point(self, s):
        return self.center + self.radius * np.exp(1j * np.asarray(s))

    def tangent(self, s):
        return 1j * self.radius * np.exp(1j * np.asarray(s))

    @property
    def scale(self) -> float:
        return self.radius

    def inside(self, z) -> bool:
        return bool(abs(z - self.center) < self.radius)

    def distance(self, z, n: int = 0) -> float:
        return abs(abs(z - self.center) - self.radius)

    def to_json(self) -> dict:
        return {"kind": "circle", "center": _pair(self.center), "radius": self.radius,
                "excluded": [_pair(z) for z in self.excluded]}


@dataclass(frozen=True, eq=False)
class CustomPeriodic(Contour):
    """Contour given by samples of gamma and gamma' on a uniform grid over
    [0, 2*pi); evaluated elsewhere by trigonometric interpolation."""

    points: np.ndarray
    derivatives: np.ndarray
    excluded: tuple[complex, ...] = ()
    _coef: np.ndarray = field(init=False, repr=False)
    _dcoef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        der = np.asarray(self.derivatives, dtype=complex)
        if pts.ndim != 1 or pts.shape != der.shape or len(pts) < 8:
            raise ValueError("points and derivatives must be equal-length vectors (>= 8)")
        if np.any(der == 0):
            raise ValueError("degenerate parameterization: gamma'(s) vanishes")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "derivatives", der)
        object.__setattr__(self, "excluded", tuple(complex(z) for z in self.excluded))
        object.__setattr__(self, "_coef", np.fft.fft(pts) / len(pts))
        object.__setattr__(self, "_dcoef", np.fft.fft(der) / len(der))

    def _interp(self, coef, s):
        s = np.asarray(s, dtype=float)
        k = _modes(len(coef))
        out = np.exp(1j * np.multiply.outer(s, k)) @ coef
        return out

    def point(self, s):
        return self._interp(self._coef, s)

    def tangent(self, s):
        return self._interp(self._dcoef, s)

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.points - self.points.mean())))

    def inside(self, z) -> bool:
        return winding_number(self.points, z) != 0

    def to_json(self) -> dict:
        return {"kind": "custom", "points": [_pair(z) for z in self.points],
                "derivatives": [_pair(z) for z in self.derivatives],
                "excluded": [_pair(z) for z in self.excluded]}


def contour_from_json(d: dict) -> Contour:
    """Inverse of ``Contour.to_json``.  Raises KeyError/ValueError naming the
    offending field."""
    if not isinstance(d, dict):
        raise ValueError("contour must be an object")
    kind = d.get("kind")
    excluded = tuple(_unpair(p) for p in d.get("excluded", []))
    if kind == "circle":
        if "radius" not in d:
            raise KeyError("contour.radius")
        return Circle(_unpair(d.get("center", [0.0, 0.0])), float(d["radius"]), excluded)
    if kind == "custom":
        for key in ("points", "derivatives"):
            if key not in d:
                raise KeyError(f"contour.{key}")
        return CustomPeriodic(np.array([_unpair(p) for p in d["points"]]),
                              np.array([_unpair(p) for p in d["derivatives"]]), excluded)
    raise ValueError(f"contour.kind must be 'circle' or 'custom', got {kind!r}")


@dataclass(frozen=True)
class Grid:
    N: int

    def __post_init__(self):
        n = self.N
        if not (N_MIN <= n <= N_MAX) or n & (n - 1):
            raise ValueError(f"N must be a power of two in [{N_MIN}, {N_MAX}], got {n}")

    @property
    def s(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N

    @property
    def h(self) -> float:
        return 2 * np.pi / self.N


@dataclass(frozen=True, eq=False)
class GridFn:
    """Complex samples of a function on a contour grid."""

    contour: Contour
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.N,):
            raise ValueError(f"expected {self.grid.N} samples, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def t(self) -> np.ndarray:
        return self.contour.point(self.grid.s)

    @property
    def dt(self) -> np.ndarray:
        return self.contour.tangent(self.grid.s)

    def with_values(self, values) -> GridFn:
        return GridFn(self.contour, self.grid, values)

    def __add__(self, other):
        other = other.values if isinstance(other, GridFn) else other
        return self.with_values(self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        other = other.values if isinstance(other, GridFn) else other
        return self.with_values(self.values - other)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GridFn2:
    """Samples on the tensor grid gamma1 x gamma2; ``values[j1, j2]``."""

    contours: tuple[Contour, Contour]
    grids: tuple[Grid, Grid]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grids[0].N, self.grids[1].N):
            raise ValueError(f"sample shape {v.shape} does not match grids")
        object.__setattr__(self, "values", v)

    def axis_nodes(self, axis: int):
        return self.contours[axis].nodes(self.grids[axis])

    def with_values(self, values) -> GridFn2:
        return GridFn2(self.contours, self.grids, values)


def _first_bad_node(e: Expr, scopes) -> int:
    for j, sc in enumerate(scopes):
        try:
            eval_expr(e, sc)
        except EvalError:
            return j
    return -1


def sample(contour: Contour, grid: Grid, e: Expr, var: str = "t",
           extra: dict | None = None) -> GridFn:
    """Evaluate ``e`` at every grid node with ``var`` bound to gamma(s_j)."""
    t = contour.point(grid.s)
    scope = dict(extra or {})
    scope[var] = t
    try:
        v = eval_expr(e, scope)
    except EvalError as err:
        j = _first_bad_node(e, ({**scope, var: z} for z in t))
        raise SampleError(f"cannot evaluate {to_string(e)}: {err}", j) from err
    v = np.broadcast_to(np.asarray(v, dtype=complex), t.shape).copy()
    if not np.all(np.isfinite(v)):
        raise SampleError(f"non-finite value of {to_string(e)}",
                          int(np.argmin(np.isfinite(v))))
    return GridFn(contour, grid, v)


def sample2(contours, grids, e: Expr, vars=("t1", "t2")) -> GridFn2:
    t1 = contours[0].point(grids[0].s)[:, None]
    t2 = contours[1].point(grids[1].s)[None, :]
    try:
        v = eval_expr(e, {vars[0]: t1, vars[1]: t2})
    except EvalError as err:
        raise SampleError(f"cannot evaluate {to_string(e)}: {err}", -1) from err
    v = np.broadcast_to(np.asarray(v, dtype=complex), (t1.size, t2.size)).copy()
    return GridFn2(tuple(contours), tuple(grids), v)


def _modes(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, 1.0 / n)


def _check_resolution(values: np.ndarray, axis: int = -1) -> None:
    n = values.shape[axis]
    power = np.abs(np.fft.fft(values, axis=axis)) ** 2
    high = np.abs(_modes(n)) > n / 3
    total = power.sum()
    if total > 0:
        frac = np.take(power, np.nonzero(high)[0], axis=axis).sum() / total
        if frac > 1e-10:
            warnings.warn(f"under-resolved samples: {frac:.2e} of spectral energy "
                          f"in the top third of {n} modes", AliasingWarning, stacklevel=3)


def diff_periodic(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """d/ds of a periodic sample vector (Nyquist mode dropped)."""
    n = values.shape[axis]
    k = 1j * _modes(n)
    if n % 2 == 0:
        k[n // 2] = 0
    shape = [1] * values.ndim
    shape[axis] = n
    c = np.fft.fft(values, axis=axis)
    # coefficients at rounding level carry only noise, which differentiation amplifies
    mag = np.abs(c)
    c[mag <= NOISE_FLOOR * np.max(mag, axis=axis, keepdims=True)] = 0
    return np.fft.ifft(c * k.reshape(shape), axis=axis)


def _diff_t(values: np.ndarray, dtau: np.ndarray, order: int, axis: int = -1,
            check: bool = True) -> np.ndarray:
    if order < 0 or order > MAX_ORDER:
        raise ValueError(f"derivative order must be in 0..{MAX_ORDER}, got {order}")
    if check and order > 0:
        _check_resolution(values, axis)
    shape = [1] * values.ndim
    shape[axis] = values.shape[axis]
    dtau = dtau.reshape(shape)
    out = values
    for _ in range(order):
        out = diff_periodic(out, axis) / dtau
    return out


def spectral_derivative(f: GridFn, order: int) -> GridFn:
    """Samples of d^order x / dt^order along the contour."""
    return f.with_values(_diff_t(f.values, f.dt, order))


def partial_derivative(f: GridFn2, axis: int, order: int) -> GridFn2:
    _, dtau = f.axis_nodes(axis)
    return f.with_values(_diff_t(f.values, dtau, order, axis=axis))


def fourier_coeffs(f: GridFn) -> np.ndarray:
    """Coefficients c_k with x(gamma(s_j)) = sum_k c_k exp(i k s_j), in numpy
    FFT order (mode k at index k mod N)."""
    return np.fft.fft(f.values) / f.grid.N


def from_fourier_coeffs(coef: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.asarray(coef) * len(coef))


def winding_number(points: np.ndarray, z: complex) -> int:
    d = np.asarray(points) - z
    if np.any(d == 0):
        raise ValueError("point lies on the contour")
    ang = np.angle(np.roll(d, -1) / d)
    return int(round(ang.sum() / (2 * np.pi)))


@dataclass(frozen=True)
class AnalyticityCheck:
    ok: bool
    offending: tuple[complex, ...] = ()

    def __bool__(self):
        return self.ok


def validate_analyticity(contour: Contour) -> AnalyticityCheck:
    """Check that each declared excluded point lies strictly outside the
    closed interior of the contour."""
    bad = []
    for z in contour.excluded:
        if isinstance(contour, Circle):
            if not abs(z - contour.center) > contour.radius:
                bad.append(z)
        else:
            pts = contour.point(np.linspace(0, 2 * np.pi, 4096, endpoint=False))
            if np.min(np.abs(pts - z)) == 0 or winding_number(pts, z) != 0:
                bad.append(z)
    return AnalyticityCheck(not bad, tuple(bad))
