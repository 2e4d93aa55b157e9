"""Complex-valued scalar expressions: parsing, printing, evaluation and
numerical differentiation.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?            # right associative
    atom   := NUMBER | 'i' | IDENT | IDENT '(' expr ')' | '(' expr ')'
            | 'diff' '(' expr ',' IDENT ',' INT ',' expr [',' NUMBER] ')'

``i`` is the imaginary unit; every other identifier is a variable.  The
``diff`` form denotes a numerical derivative (see :func:`diff_at`) and is
how kernel derivatives survive serialization of reduced equations.

Evaluation is vectorised: scope values may be numpy arrays, in which case
the result is an array of the broadcast shape.
"""

from __future__ import annotations

import math
import re
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp", "Call", "Deriv",
    "ParseError", "EvalError", "DerivativeError",
    "FUNCTIONS", "parse_expr", "to_string", "eval_expr", "diff_at",
    "lift", "const", "variables", "depends_on", "substitute", "is_affine_in",
]

Number = Union[int, float, complex]
EvalScope = Mapping[str, Union[complex, np.ndarray]]


class ParseError(ValueError):
    """Malformed expression text.  ``offset`` is a byte offset into the input."""

    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.message = message
        self.offset = offset
        self.expected = expected
        detail = f"{message} at offset {offset}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class EvalError(ArithmeticError):
    pass


class DerivativeError(EvalError):
    """Cauchy-formula derivative did not converge (integrand not analytic)."""


def _cexp(z):
    return np.exp(z)


def _cln(z):
    if np.any(z == 0):
        raise EvalError("ln: logarithmic singularity at 0")
    return np.log(z)


def _csqrt(z):
    return np.sqrt(z)


def _ctan(z):
    c = np.cos(z)
    if np.any(c == 0):
        raise EvalError("tan: pole")
    return np.sin(z) / c


def _catan(z):
    if np.any((z == 1j) | (z == -1j)):
        raise EvalError("atan: logarithmic singularity at +-i")
    return np.arctan(z)


FUNCTIONS = {
    "exp": _cexp,
    "ln": _cln,
    "sin": np.sin,
    "cos": np.cos,
    "tan": _ctan,
    "atan": _catan,
    "sqrt": _csqrt,
}

_RESERVED = set(FUNCTIONS) | {"i", "diff"}


# --------------------------------------------------------------------------
# AST


class Expr:
    """Base class of expression nodes.  Nodes are immutable and compare
    structurally."""

    __slots__ = ()

    def __add__(self, other):
        return BinOp("+", self, lift(other))

    def __radd__(self, other):
        return BinOp("+", lift(other), self)

    def __sub__(self, other):
        return BinOp("-", self, lift(other))

    def __rsub__(self, other):
        return BinOp("-", lift(other), self)

    def __mul__(self, other):
        return BinOp("*", self, lift(other))

    def __rmul__(self, other):
        return BinOp("*", lift(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, lift(other))

    def __rtruediv__(self, other):
        return BinOp("/", lift(other), self)

    def __pow__(self, other):
        return BinOp("^", self, lift(other))

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: complex

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))

    def __repr__(self):
        return f"Num({self.value!r})"


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in "+-*/^" or len(self.op) != 1:
            raise ValueError(f"unknown operator {self.op!r}")

    def __repr__(self):
        return f"BinOp({self.op!r}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")

    def __repr__(self):
        return f"Call({self.func!r}, {self.arg!r})"


@dataclass(frozen=True)
class Deriv(Expr):
    """``order``-th derivative of ``body`` in ``var``, evaluated at ``var = at``."""

    body: Expr
    var: str
    order: int
    at: Expr
    radius: float = 0.05

    def __repr__(self):
        return (f"Deriv({self.body!r}, {self.var!r}, {self.order}, "
                f"{self.at!r}, {self.radius!r})")


def lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, complex, np.number)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def const(value: Number) -> Expr:
    """Canonical tree for a numeric constant, built so that printing and
    re-parsing reproduces it (literals in the grammar are non-negative reals)."""
    z = complex(value)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"non-finite constant {value!r}")

    def real_part(x):
        return Neg(Num(-x)) if x < 0 else Num(x)

    if z.imag == 0:
        return real_part(z.real)
    if z.imag == 1:
        im = Num(1j)
    elif z.imag == -1:
        im = Neg(Num(1j))
    elif z.imag < 0:
        im = Neg(BinOp("*", Num(-z.imag), Num(1j)))
    else:
        im = BinOp("*", Num(z.imag), Num(1j))
    if z.real == 0:
        return im
    return BinOp("+", real_part(z.real), im)


# --------------------------------------------------------------------------
# Printing

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_real(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL,
                "/": _PREC_MUL, "^": _PREC_POW}[e.op]
    if isinstance(e, Neg):
        return _PREC_UNARY
    return _PREC_ATOM


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_string(e)
    return s if _prec(e) >= min_prec else f"({s})"


def to_string(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses that re-parse to the same tree."""
    if isinstance(e, Num):
        z = e.value
        if z.imag == 0 and z.real >= 0:
            return _fmt_real(abs(z.real))
        if z == 1j:
            return "i"
        return f"({to_string(const(z))})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _PREC_UNARY)
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Deriv):
        return (f"diff({to_string(e.body)}, {e.var}, {e.order}, "
                f"{to_string(e.at)}, {e.radius!r})")
    if isinstance(e, BinOp):
        if e.op in "+-":
            return f"{_wrap(e.left, _PREC_ADD)} {e.op} {_wrap(e.right, _PREC_MUL)}"
        if e.op in "*/":
            return f"{_wrap(e.left, _PREC_MUL)}{e.op}{_wrap(e.right, _PREC_UNARY)}"
        return f"{_wrap(e.left, _PREC_ATOM)}^{_wrap(e.right, _PREC_UNARY)}"
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>[-+*/^(),])""",
    re.VERBOSE,
)

_ATOM_START = "number, identifier, 'i', '(' or '-'"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        raw = text.encode("utf-8")
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}",
                                 len(text[:pos].encode("utf-8")))
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), len(text[:pos].encode("utf-8"))))
            pos = m.end()
        self.tokens.append(("eof", "", len(raw)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.peek()
        if text != value or kind == "eof":
            got = "end of input" if kind == "eof" else repr(text)
            raise ParseError(f"unexpected {got}", off, repr(value))
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected {text!r}", off, "operator or end of input")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, off = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "ident":
            self.advance()
            if text == "i":
                return Num(1j)
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text == "diff":
                    return self.diff_form()
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", off,
                                     "one of " + ", ".join(sorted(FUNCTIONS)))
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in _RESERVED:
                raise ParseError(f"function {text!r} used without argument", off, "'('")
            return Var(text)
        if kind == "op" and text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        got = "end of input" if kind == "eof" else repr(text)
        raise ParseError(f"unexpected {got}", off, _ATOM_START)

    def diff_form(self) -> Expr:
        self.expect("(")
        body = self.expr()
        self.expect(",")
        kind, var, off = self.advance()
        if kind != "ident" or var in _RESERVED:
            raise ParseError("diff: expected variable name", off, "identifier")
        self.expect(",")
        kind, order, off = self.advance()
        if kind != "num" or not order.isdigit():
            raise ParseError("diff: expected integer order", off, "integer")
        self.expect(",")
        at = self.expr()
        radius = 0.05
        if self.peek()[1] == ",":
            self.advance()
            kind, text, off = self.advance()
            if kind != "num":
                raise ParseError("diff: expected radius", off, "number")
            radius = float(text)
        self.expect(")")
        return Deriv(body, var, int(order), at, radius)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    >>> parse_expr("exp(2*t)")
    Call('exp', BinOp('*', Num((2+0j)), Var('t')))
    """
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# Evaluation


def _ipow(z, n: int):
    if n < 0:
        d = _ipow(z, -n)
        if np.any(d == 0):
            raise EvalError("division by zero in negative power")
        return 1.0 / d
    result = np.ones_like(z) if isinstance(z, np.ndarray) else 1.0 + 0j
    base = z
    while n:
        if n & 1:
            result = result * base
        n >>= 1
        if n:
            base = base * base
    return result


def _as_int_exponent(v):
    if np.ndim(v) != 0:
        return None
    v = complex(v)
    if v.imag == 0 and v.real.is_integer() and abs(v.real) <= 1024:
        return int(v.real)
    return None


def _eval(e: Expr, scope: EvalScope):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            v = scope[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
        return np.asarray(v, dtype=complex) if isinstance(v, np.ndarray) else complex(v)
    if isinstance(e, Neg):
        # 0 - v keeps a +0 imaginary part, so sqrt(-4) stays on the principal branch
        return 0 - _eval(e.arg, scope)
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_eval(e.arg, scope))
    if isinstance(e, Deriv):
        return diff_at(e.body, e.var, _eval(e.at, scope), e.order, e.radius, scope)
    if isinstance(e, BinOp):
        a = _eval(e.left, scope)
        b = _eval(e.right, scope)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(b == 0):
                raise EvalError(f"division by zero in {to_string(e)}")
            return a / b
        n = _as_int_exponent(b)
        if n is not None:
            return _ipow(a, n)
        if np.any((a == 0) & (np.real(b) <= 0)):
            raise EvalError(f"0 raised to non-positive power in {to_string(e)}")
        if np.ndim(a) == 0 and np.ndim(b) == 0:
            return 0j if a == 0 else complex(np.power(complex(a), complex(b)))
        a = np.asarray(a, dtype=complex)
        return np.where(a == 0, 0j, np.power(np.where(a == 0, 1, a), b))
    raise TypeError(f"not an expression node: {e!r}")


def eval_expr(e: Expr, scope: EvalScope):
    """Evaluate ``e`` under principal branches.  Returns a complex scalar, or
    an array when any scope value used is an array."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = _eval(e, scope)
    if isinstance(out, np.ndarray):
        if out.ndim == 0:
            return complex(out)
        return out
    return complex(out)


def diff_at(e: Expr, var: str, point, order: int, radius: float = 0.05,
            scope: EvalScope | None = None, nodes: int = 64, rtol: float = 1e-8):
    """Derivative of ``e`` with respect to ``var`` by Cauchy's integral formula.

    The circle of the given radius about ``point`` is discretised by the
    trapezoidal rule with ``nodes`` and ``2*nodes`` points; the finer value is
    returned after checking the two agree.  ``point`` may be an array.

    Raises
    ------
    DerivativeError
        If the two discretisations disagree, i.e. ``e`` is not analytic in
        the disk.
    """
    if order < 0 or order > 8:
        raise ValueError("derivative order must be in 0..8")
    if radius <= 0:
        raise ValueError("radius must be positive")
    base = dict(scope or {})
    if order == 0:
        base[var] = point
        return eval_expr(e, base)

    point = np.asarray(point, dtype=complex)

    def cauchy(m):
        w = np.exp(2j * np.pi * np.arange(m) / m)
        sc = {k: np.asarray(v, dtype=complex)[..., None] for k, v in base.items()}
        sc[var] = point[..., None] + radius * w
        f = eval_expr(e, sc)
        f = np.broadcast_to(f, np.broadcast_shapes(np.shape(f), sc[var].shape))
        d = math.factorial(order) / radius**order * np.mean(f * w**-order, axis=-1)
        return d, np.max(np.abs(f), axis=-1)

    coarse, _ = cauchy(nodes)
    fine, fmax = cauchy(2 * nodes)
    floor = 1e3 * np.finfo(float).eps * math.factorial(order) * fmax / radius**order
    bad = np.abs(fine - coarse) > rtol * np.maximum(np.abs(fine), 1.0) + floor
    if np.any(bad) or not np.all(np.isfinite(fine)):
        raise DerivativeError(
            f"Cauchy derivative of order {order} in {var} did not converge "
            f"(integrand not analytic within radius {radius})")
    return complex(fine) if fine.ndim == 0 else fine


# --------------------------------------------------------------------------
# Structural helpers


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg, Call)):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Deriv):
        return (variables(e.body) - {e.var}) | variables(e.at)
    raise TypeError(f"not an expression node: {e!r}")


def depends_on(e: Expr, var: str) -> bool:
    return var in variables(e)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace free variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Deriv):
        inner = {k: v for k, v in mapping.items() if k != e.var}
        return Deriv(substitute(e.body, inner), e.var, e.order,
                     substitute(e.at, mapping), e.radius)
    raise TypeError(f"not an expression node: {e!r}")


def is_affine_in(e: Expr, var: str) -> bool:
    """Conservative structural test that ``e`` is affine in ``var``."""
    if not depends_on(e, var):
        return True
    if isinstance(e, Var):
        return True
    if isinstance(e, Neg):
        return is_affine_in(e.arg, var)
    if isinstance(e, BinOp):
        if e.op in "+-":
            return is_affine_in(e.left, var) and is_affine_in(e.right, var)
        if e.op == "*":
            if depends_on(e.left, var) and depends_on(e.right, var):
                return False
            return is_affine_in(e.left, var) and is_affine_in(e.right, var)
        if e.op == "/":
            return not depends_on(e.right, var) and is_affine_in(e.left, var)
        if e.op == "^":
            return (not depends_on(e.right, var) and e.right == Num(1)
                    and is_affine_in(e.left, var))
    return False
