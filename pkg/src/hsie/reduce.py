"""Equation representations and their reduction to differential equations.

Under analyticity of the unknown inside the contour,

    (1/(pi i)) FP integral x(tau)/(tau-t)^p dtau = x^(p-1)(t) / (p-1)!,

so every integral term becomes a derivative term.  Kernelled terms
h(t, tau) x(tau) use the Leibniz rule on the product.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .contour import Circle, Contour, Grid, contour_from_json
from .expr import (Deriv, Expr, Num, Var, const, eval_expr, parse_expr, substitute,
                   to_string, variables)

__all__ = [
    "ReductionError", "HsieTerm", "OneDimEquation", "NonlinearEquation",
    "TwoDimEquation", "OdeIR", "PdeIR", "OrderReport",
    "reduce_linear", "reduce_p1_closed_form", "reduce_nonlinear", "reduce_bi",
    "ode_order_report", "render_ode", "render_pde",
    "equation_from_json", "equation_to_json", "ir_to_json", "ir_from_json",
]

ZERO = Num(0)
ONE = Num(1)
_S_RE = re.compile(r"^S([1-9][0-9]*)$")
_D_RE = re.compile(r"^D([1-9][0-9]*)$")


class ReductionError(ValueError):
    pass


def _e(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse_expr(x)
    return const(x)


@dataclass(frozen=True)
class HsieTerm:
    """coeff(t) * [integral operator of order p applied to x^(l)].

    p = 0 is the pointwise term coeff * x^(l); p >= 1 is
    coeff * (1/(pi i)) FP integral h(t,tau) x^(l)(tau) / (tau-t)^p dtau with
    h = 1 unless ``kernel`` is given.  ``kernel_derivs`` optionally supplies
    closed forms of d^i h / dtau^i at tau = t, i = 0..p-1, as expressions in t.
    """

    coeff: Expr
    p: int = 0
    l: int = 0
    kernel: Expr | None = None
    kernel_derivs: tuple[Expr, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "coeff", _e(self.coeff))
        if self.kernel is not None:
            object.__setattr__(self, "kernel", _e(self.kernel))
        if self.kernel_derivs is not None:
            object.__setattr__(self, "kernel_derivs", tuple(_e(k) for k in self.kernel_derivs))
        if self.p < 0 or self.l < 0:
            raise ValueError("orders must be non-negative")
        if self.kernel is not None and self.p == 0:
            raise ValueError("a kernel requires an integral term (p >= 1)")
        if self.kernel_derivs is not None and len(self.kernel_derivs) != self.p:
            raise ValueError(f"need {self.p} kernel derivatives, got {len(self.kernel_derivs)}")


@dataclass(frozen=True)
class OneDimEquation:
    terms: tuple[HsieTerm, ...]
    rhs: Expr
    contour: Contour = field(default_factory=Circle)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "rhs", _e(self.rhs))
        if not self.terms:
            raise ValueError("equation needs at least one term")
        allowed = {"t", "tau"}
        for term in self.terms:
            for ex in (term.coeff, term.kernel):
                if ex is not None and not variables(ex) <= allowed:
                    raise ValueError(f"unexpected variables {variables(ex) - allowed} "
                                     f"in {to_string(ex)}")
        if not variables(self.rhs) <= {"t"}:
            raise ValueError("right-hand side may only depend on t")


@dataclass(frozen=True)
class NonlinearEquation:
    """lhs(t, x, S1, ..., Sp) = rhs(t), where Sk stands for
    (1/(pi i)) FP integral x(tau)/(tau-t)^k dtau."""

    lhs: Expr
    rhs: Expr
    contour: Contour = field(default_factory=Circle)

    def __post_init__(self):
        object.__setattr__(self, "lhs", _e(self.lhs))
        object.__setattr__(self, "rhs", _e(self.rhs))
        for name in variables(self.lhs):
            if name not in ("t", "x") and not _S_RE.match(name):
                raise ReductionError(f"unknown placeholder variable {name!r}")

    @property
    def p(self) -> int:
        orders = [int(_S_RE.match(v).group(1)) for v in variables(self.lhs) if _S_RE.match(v)]
        return max(orders, default=0)


@dataclass(frozen=True)
class TwoDimEquation:
    """a x + b S1^p x + c S2^p x + d S12^p x = f on gamma1 x gamma2.

    S1^p, S2^p are the normalised one-variable hypersingular operators and
    S12^p = -(1/pi^2) FP double integral, the iterate of the two.  ``f`` may
    depend on x (nonlinear right-hand side).  ``drop_factorials`` reproduces
    reduced equations printed without the 1/(p-1)! factors; it only affects
    the reduced PDE, never the integral equation itself.
    """

    a: Expr
    b: Expr
    c: Expr
    d: Expr
    f: Expr
    p: int = 2
    contours: tuple[Contour, Contour] = field(default_factory=lambda: (Circle(), Circle()))
    drop_factorials: bool = False

    def __post_init__(self):
        for name in "abcdf":
            object.__setattr__(self, name, _e(getattr(self, name)))
        object.__setattr__(self, "contours", tuple(self.contours))
        if self.p < 2:
            raise ValueError("bihypersingular equations need p >= 2")
        for name in "abcdf":
            extra = variables(getattr(self, name)) - {"t1", "t2", "x"}
            if extra:
                raise ValueError(f"coefficient {name} uses unknown variables {sorted(extra)}")


@dataclass(frozen=True)
class OdeIR:
    """Reduced ODE.  Linear: sum_k coeffs[k](t) x^(k) = rhs(t).
    Nonlinear: lhs(t, x, D1, ..., Ds) = rhs(t) with Dk = x^(k)."""

    kind: str
    order: int
    rhs: Expr
    coeffs: tuple[Expr, ...] = ()
    lhs: Expr | None = None
    r: int = 0

    @property
    def free_parameters(self) -> int:
        return self.order - self.r

    @property
    def linear(self) -> bool:
        return self.kind == "linear"

    def normalized(self) -> OdeIR:
        """Linear IR divided through by its leading coefficient."""
        if not self.linear:
            raise ValueError("only linear IRs can be normalised")
        lead = self.coeffs[self.order]
        if lead == ONE:
            return self
        coeffs = tuple(ZERO if c == ZERO else c / lead for c in self.coeffs[:-1]) + (ONE,)
        return OdeIR("linear", self.order, self.rhs / lead, coeffs, r=self.r)

    def as_nonlinear_lhs(self) -> Expr:
        """lhs over {t, x, D1..Ds}; for linear IRs the polynomial sum c_k D_k."""
        if not self.linear:
            return self.lhs
        total = None
        for k, c in enumerate(self.coeffs):
            if c == ZERO:
                continue
            term = c * _dvar(k)
            total = term if total is None else total + term
        return total if total is not None else ZERO


@dataclass(frozen=True)
class PdeIR:
    """a x + b d^q x/dt1^q + c d^q x/dt2^q + d d^2q x/dt1^q dt2^q = f, q = p-1.
    Coefficients include the factorial factors."""

    a: Expr
    b: Expr
    c: Expr
    d: Expr
    f: Expr
    q: int

    @property
    def nonlinear(self) -> bool:
        return any("x" in variables(getattr(self, n)) for n in "abcdf")


@dataclass(frozen=True)
class OrderReport:
    s: int
    r: int
    free_parameters: int


def _dvar(k: int) -> Expr:
    return Var("x") if k == 0 else Var(f"D{k}")


def _scaled(e: Expr, factor: int) -> Expr:
    return e if factor == 1 else e / Num(factor)


def _product(a: Expr, b: Expr) -> Expr:
    if a == ONE:
        return b
    return a if b == ONE else a * b


def _check_nonzero(e: Expr, contour: Contour, what: str, N: int = 64) -> None:
    t = contour.point(Grid(N).s)
    v = np.broadcast_to(eval_expr(e, {"t": t}), t.shape)
    if np.any(np.abs(v) <= 1e-14 * max(1.0, float(np.max(np.abs(v))))):
        j = int(np.argmin(np.abs(v)))
        raise ReductionError(f"{what} vanishes at grid node {j} (t = {t[j]:.6g})")


def reduce_linear(eq: OneDimEquation) -> OdeIR:
    """Map each term to derivative terms and collect coefficients by order."""
    acc: dict[int, Expr] = {}

    def add(order, coeff):
        acc[order] = coeff if order not in acc else acc[order] + coeff

    n = m = 0
    radius = 0.1 * eq.contour.scale
    for term in eq.terms:
        if term.p == 0:
            add(term.l, term.coeff)
            n = max(n, term.l)
            continue
        m = max(m, term.l)
        fact = math.factorial(term.p - 1)
        if term.kernel is None:
            add(term.l + term.p - 1, _scaled(term.coeff, fact))
            continue
        for i in range(term.p):
            if term.kernel_derivs is not None:
                hi = term.kernel_derivs[i]
            elif i == 0:
                hi = substitute(term.kernel, {"tau": Var("t")})
            else:
                hi = Deriv(term.kernel, "tau", i, Var("t"), radius)
            weight = math.comb(term.p - 1, i)
            coeff = _product(term.coeff, hi)
            if weight != 1:
                coeff = Num(weight) * coeff
            add(term.l + term.p - 1 - i, _scaled(coeff, fact))
    nonzero = [k for k, c in acc.items() if c != ZERO]
    if not nonzero:
        raise ReductionError("all coefficients are identically zero")
    s = max(nonzero)
    coeffs = tuple(acc.get(k, ZERO) for k in range(s + 1))
    _check_nonzero(coeffs[s], eq.contour, "leading coefficient")
    return OdeIR("linear", s, eq.rhs, coeffs, r=max(n, m))


def reduce_p1_closed_form(a, b, f, contour: Contour | None = None, N: int = 64) -> Expr:
    """Solution f/(a+b) of a x + b S1 x = f."""
    a, b, f = _e(a), _e(b), _e(f)
    denom = a + b
    _check_nonzero(denom, contour or Circle(), "a + b")
    return f / denom


def reduce_nonlinear(eq: NonlinearEquation) -> OdeIR:
    """Substitute Sk -> D(k-1)/(k-1)! (D0 = x)."""
    p = eq.p
    mapping = {}
    for name in variables(eq.lhs):
        mt = _S_RE.match(name)
        if mt:
            k = int(mt.group(1))
            mapping[name] = _scaled(_dvar(k - 1), math.factorial(k - 1))
    lhs = substitute(eq.lhs, mapping)
    return OdeIR("nonlinear", max(p - 1, 0), eq.rhs, lhs=lhs, r=0)


def reduce_bi(eq: TwoDimEquation) -> PdeIR:
    q = eq.p - 1
    fact = 1 if eq.drop_factorials else math.factorial(q)

    def scaled(e, k):
        if e == ZERO or k == 1:
            return e
        return e / Num(k)

    return PdeIR(eq.a, scaled(eq.b, fact), scaled(eq.c, fact), scaled(eq.d, fact * fact),
                 eq.f, q)


def ode_order_report(ir: OdeIR) -> OrderReport:
    return OrderReport(ir.order, ir.r, ir.free_parameters)


# --------------------------------------------------------------------------
# Rendering


def _dname(k: int, base: str = "x") -> str:
    if k == 0:
        return base
    if k <= 3:
        return base + "'" * k
    return f"{base}^({k})"


def _pretty_placeholders(s: str) -> str:
    return re.sub(r"\bD([1-9][0-9]*)\b", lambda mt: _dname(int(mt.group(1))), s)


def render_ode(ir: OdeIR) -> str:
    """Human-readable form, e.g. ``x' + (1/(2 + t^2))*x = ...``."""
    if not ir.linear:
        return f"{_pretty_placeholders(to_string(ir.lhs))} = {to_string(ir.rhs)}"
    parts = []
    for k in range(ir.order, -1, -1):
        c = ir.coeffs[k]
        if c == ZERO:
            continue
        parts.append(_dname(k) if c == ONE else f"({to_string(c)})*{_dname(k)}")
    return " + ".join(parts) + f" = {to_string(ir.rhs)}"


def render_pde(ir: PdeIR) -> str:
    q = ir.q
    syms = ["x", f"d^{q}x/dt1^{q}", f"d^{q}x/dt2^{q}", f"d^{2 * q}x/dt1^{q}dt2^{q}"]
    parts = []
    for c, sym in zip((ir.a, ir.b, ir.c, ir.d), syms):
        if c == ZERO:
            continue
        parts.append(sym if c == ONE else f"({to_string(c)})*{sym}")
    return (" + ".join(parts) or "0") + f" = {to_string(ir.f)}"


# --------------------------------------------------------------------------
# JSON


def _s(e: Expr | None):
    return None if e is None else to_string(e)


def equation_to_json(eq) -> dict:
    if isinstance(eq, OneDimEquation):
        return {"type": "linear", "rhs": _s(eq.rhs), "terms": [
            {"coeff": _s(t.coeff), "p": t.p, "l": t.l, "kernel": _s(t.kernel),
             "kernel_derivs": None if t.kernel_derivs is None else [_s(k) for k in t.kernel_derivs]}
            for t in eq.terms], "contour": eq.contour.to_json()}
    if isinstance(eq, NonlinearEquation):
        return {"type": "nonlinear", "lhs": _s(eq.lhs), "rhs": _s(eq.rhs),
                "contour": eq.contour.to_json()}
    if isinstance(eq, TwoDimEquation):
        d = {n: _s(getattr(eq, n)) for n in "abcdf"}
        d.update(type="bi", p=eq.p, drop_factorials=eq.drop_factorials,
                 contours=[c.to_json() for c in eq.contours])
        return d
    raise TypeError(type(eq).__name__)


def _field(d: dict, key: str, where: str):
    if key not in d:
        raise KeyError(f"{where}.{key}")
    return d[key]


def equation_from_json(d: dict, contour: Contour | None = None,
                       contours: tuple[Contour, Contour] | None = None):
    """Build an equation from its JSON form.  Missing fields raise KeyError
    with a dotted path; malformed expressions raise ParseError."""
    kind = _field(d, "type", "equation")
    if "contour" in d:
        contour = contour_from_json(d["contour"])
    if "contours" in d:
        contours = tuple(contour_from_json(c) for c in d["contours"])
    if kind == "linear":
        terms = []
        for i, t in enumerate(_field(d, "terms", "equation")):
            where = f"equation.terms[{i}]"
            kd = t.get("kernel_derivs")
            terms.append(HsieTerm(_e(_field(t, "coeff", where)), int(t.get("p", 0)),
                                  int(t.get("l", 0)),
                                  _e(t["kernel"]) if t.get("kernel") else None,
                                  tuple(_e(k) for k in kd) if kd else None))
        if contour is None:
            raise KeyError("contour")
        return OneDimEquation(tuple(terms), _e(_field(d, "rhs", "equation")), contour)
    if kind == "nonlinear":
        if contour is None:
            raise KeyError("contour")
        return NonlinearEquation(_e(_field(d, "lhs", "equation")),
                                 _e(_field(d, "rhs", "equation")), contour)
    if kind == "bi":
        if contours is None:
            raise KeyError("contours")
        vals = {n: _e(d.get(n, "0")) for n in "abcd"}
        return TwoDimEquation(**vals, f=_e(d.get("f", "0")), p=int(_field(d, "p", "equation")),
                              contours=contours,
                              drop_factorials=bool(d.get("drop_factorials", False)))
    raise ValueError(f"equation.type must be linear, nonlinear or bi; got {kind!r}")


def ir_to_json(ir) -> dict:
    if isinstance(ir, OdeIR):
        out = {"kind": ir.kind, "order": ir.order, "r": ir.r,
               "free_parameters": ir.free_parameters, "rhs": _s(ir.rhs)}
        if ir.linear:
            out["coefficients"] = [_s(c) for c in ir.coeffs]
        else:
            out["lhs"] = _s(ir.lhs)
        return out
    if isinstance(ir, PdeIR):
        return {"kind": "pde", "q": ir.q, **{n: _s(getattr(ir, n)) for n in "abcdf"}}
    raise TypeError(type(ir).__name__)


def ir_from_json(d: dict):
    kind = _field(d, "kind", "ir")
    if kind == "pde":
        return PdeIR(*(_e(d[n]) for n in "abcdf"), int(d["q"]))
    if kind == "linear":
        return OdeIR("linear", int(d["order"]), _e(d["rhs"]),
                     tuple(_e(c) for c in d["coefficients"]), r=int(d.get("r", 0)))
    if kind == "nonlinear":
        return OdeIR("nonlinear", int(d["order"]), _e(d["rhs"]), lhs=_e(d["lhs"]),
                     r=int(d.get("r", 0)))
    raise ValueError(f"unknown IR kind {kind!r}")
