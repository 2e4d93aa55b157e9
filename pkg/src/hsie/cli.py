"""Command-line front end.

    hsie quad   --config F
    hsie reduce --config F [--print]
    hsie solve  --config F --out CSV
    hsie verify --config F [--report JSON]
    hsie demo   {ex37, ex43, ex612, ex614, fp-identity}

Exit status: 0 success, 1 verification or convergence failure, 2 bad input.
Relative output paths are resolved against $HSIE_OUTPUT_DIR when set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .contour import (AliasingWarning, Circle, Grid, contour_from_json, sample,
                      sample2, spectral_derivative)
from .expr import EvalError, ParseError, const, eval_expr, parse_expr
from .quad import (OracleError, QuadratureError, SingularIntegralSpec, fp_integral,
                   fp_integral_2d, fp_integral_all, fp_integral_checked, fp_limit_oracle,
                   fp_monomial)
from .reduce import (HsieTerm, NonlinearEquation, OneDimEquation, PdeIR, ReductionError,
                     TwoDimEquation, equation_from_json, ir_to_json, reduce_bi, reduce_linear,
                     reduce_nonlinear, render_ode, render_pde)
from .solve import (OdeProblem, SolveError, family_616, family_617, initial_from_candidate,
                    solve_613, solve_linear_first_order, solve_ode_rk)
from .verify import DEFAULT_TOLERANCE, residual_1d, residual_2d, residual_reduced

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Deterministic JSON


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps([float(obj.real), float(obj.imag)], indent, _level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _pair(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


# --------------------------------------------------------------------------
# Config handling


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from err
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: "
                          f"{err.msg}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _grid_size(cfg: dict, default: int) -> int:
    n = cfg.get("N", default)
    if not isinstance(n, int) or isinstance(n, bool):
        raise ConfigError("field N: expected an integer")
    Grid(n)
    return n


def _complex(v, where: str) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2:
        return complex(v[0], v[1])
    if isinstance(v, str):
        e = parse_expr(v)
        return complex(eval_expr(e, {}))
    raise ConfigError(f"field {where}: expected a number, [re, im] or a constant expression")


def _equation(cfg: dict):
    if "equation" not in cfg:
        raise ConfigError("missing field: equation")
    contour = contour_from_json(cfg["contour"]) if "contour" in cfg else None
    contours = (tuple(contour_from_json(c) for c in cfg["contours"])
                if "contours" in cfg else None)
    return equation_from_json(cfg["equation"], contour=contour, contours=contours)


def _reduce(eq):
    if isinstance(eq, OneDimEquation):
        return reduce_linear(eq)
    if isinstance(eq, NonlinearEquation):
        return reduce_nonlinear(eq)
    return reduce_bi(eq)


def _out_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get("HSIE_OUTPUT_DIR")
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------
# Subcommands


def cmd_quad(args) -> int:
    cfg = load_config(args.config)
    if "quad" not in cfg:
        raise ConfigError("missing field: quad")
    q = cfg["quad"]
    mode = q.get("mode")
    N = _grid_size(cfg, 128)
    if mode == "fp2d":
        contours = tuple(contour_from_json(c) for c in cfg["contours"]) \
            if "contours" in cfg else (Circle(), Circle())
        dens = parse_expr(_req(q, "density", "quad"))
        p = int(q.get("p", 2))
        j1, j2 = (int(v) for v in q.get("nodes", (0, 0)))
        vals = []
        for n, scale in ((N, 1), (2 * N, 2)):
            f = sample2(contours, (Grid(n), Grid(n)), dens)
            vals.append(fp_integral_2d(f, p, (scale * j1, scale * j2)))
        ok = abs(vals[1] - vals[0]) <= 1e-8 * max(1.0, abs(vals[1]))
        out = {"re": vals[1].real, "im": vals[1].imag, "n": 2 * N, "converged": bool(ok)}
        print(dumps(out))
        return EXIT_OK if ok else EXIT_FAIL
    if "contour" not in cfg:
        raise ConfigError("missing field: contour")
    contour = contour_from_json(cfg["contour"])
    node = int(q.get("node", 0))
    if not 0 <= node < N:
        raise ConfigError(f"field quad.node: out of range for N={N}")
    if mode == "monomial":
        m = int(_req(q, "m", "quad"))
        v = fp_monomial(contour, node, m)
        out = {"re": v.real, "im": v.imag, "n": N, "converged": True}
    elif mode in ("pv", "fp"):
        p = 1 if mode == "pv" else int(q.get("p", 2))
        dens = parse_expr(_req(q, "density", "quad"))
        r = fp_integral_checked(dens, contour, N, p, node)
        out = {"re": r.value.real, "im": r.value.imag, "n": r.n, "converged": r.converged}
    elif mode == "oracle":
        p = int(q.get("p", 2))
        dens = parse_expr(_req(q, "density", "quad"))
        try:
            v = fp_limit_oracle(dens, contour, p, node, N, normalize=bool(q.get("normalize")))
            out = {"re": v.real, "im": v.imag, "n": N, "converged": True}
        except OracleError as err:
            print(f"oracle did not converge: {err}", file=sys.stderr)
            out = {"re": float("nan"), "im": float("nan"), "n": N, "converged": False}
    else:
        raise ConfigError("field quad.mode: expected one of pv, fp, fp2d, monomial, oracle")
    print(dumps(out))
    return EXIT_OK if out["converged"] else EXIT_FAIL


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing field: {where}.{key}")
    return d[key]


def cmd_reduce(args) -> int:
    eq = _equation(load_config(args.config))
    ir = _reduce(eq)
    if isinstance(ir, PdeIR):
        text = render_pde(ir)
        payload = {"ir": ir_to_json(ir), "rendering": text}
    else:
        text = render_ode(ir)
        payload = {"ir": ir_to_json(ir), "rendering": text}
        if ir.linear:
            payload["normalized"] = render_ode(ir.normalized())
    if args.print:
        print(text)
        if "normalized" in payload and payload["normalized"] != text:
            print(payload["normalized"])
    else:
        print(dumps(payload))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    eq = _equation(cfg)
    if isinstance(eq, TwoDimEquation):
        raise ConfigError("field equation.type: solve supports linear and nonlinear equations")
    ir = _reduce(eq)
    N = _grid_size(cfg, 128)
    start = int(cfg.get("start", 0))
    if "initial" in cfg:
        init = tuple(_complex(v, f"initial[{i}]") for i, v in enumerate(cfg["initial"]))
    elif "candidate" in cfg:
        init = initial_from_candidate(parse_expr(cfg["candidate"]), eq.contour, N, start,
                                      ir.order)
    else:
        raise ConfigError("missing field: initial (or candidate)")
    problem = OdeProblem(ir, eq.contour, N, start, init, int(cfg.get("subdivision", 4)))
    method = cfg.get("method", "rk")
    if method == "closed":
        if not (ir.linear and ir.order == 1):
            raise ConfigError("field method: closed form needs a first-order linear equation")
        nir = ir.normalized()
        sol = solve_linear_first_order(nir.coeffs[0], nir.rhs, problem)
    elif method == "rk":
        sol = solve_ode_rk(problem)
    else:
        raise ConfigError("field method: expected rk or closed")
    _out_path(args.out).write_text(sol.to_csv(), encoding="utf-8")
    print(dumps({"holonomy": [_pair(z) for z in sol.holonomy],
                 "max_step_error": sol.max_step_error}))
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    eq = _equation(cfg)
    cand = parse_expr(_req(cfg, "candidate", "config"))
    tol = float(cfg.get("tolerance", DEFAULT_TOLERANCE))
    if isinstance(eq, TwoDimEquation):
        rep = residual_2d(eq, cand, _grid_size(cfg, 64), tol)
    else:
        rep = residual_1d(eq, cand, _grid_size(cfg, 128), tol)
    body = dumps(rep.to_json(per_node=args.per_node))
    if args.report:
        _out_path(args.report).write_text(body + "\n", encoding="utf-8")
    print(body)
    return EXIT_OK if rep.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# Demos


def _row(rows, what, value, tol):
    rows.append((what, value, tol, value <= tol))


def _demo_ex37():
    c = Circle(excluded=(1j, -1j, 2 ** 0.5 * 1j, -(2 ** 0.5) * 1j))
    eq = OneDimEquation((HsieTerm("1"), HsieTerm("2+t^2", 2)), "(5+2*t^2)*exp(2*t)", c)
    ir = reduce_linear(eq)
    print("reduced:", render_ode(ir.normalized()))
    x = parse_expr("exp(2*t)")
    rows = []
    _row(rows, "HSIE residual (N=128)", residual_1d(eq, x, 128).max, 1e-8)
    N = 128
    t = c.point(Grid(N).s)
    problem = OdeProblem(ir, c, N, 0, (np.exp(2 * t[0]),))
    nir = ir.normalized()
    closed = solve_linear_first_order(nir.coeffs[0], nir.rhs, problem)
    _row(rows, "closed-form solution error", float(np.max(np.abs(closed.x.values - np.exp(2 * t)))),
         1e-8)
    rk = solve_ode_rk(problem)
    _row(rows, "RK4 solution error", float(np.max(np.abs(rk.x.values - np.exp(2 * t)))), 1e-6)
    _row(rows, "RK4 holonomy", float(np.max(np.abs(rk.holonomy))), 1e-6)
    return rows


def _demo_ex43():
    c = Circle()
    eq = NonlinearEquation("S2 - S1^2 - 3*S1", "-4", c)
    ir = reduce_nonlinear(eq)
    print("reduced:", render_ode(ir))
    x = parse_expr("(1-4*exp(5*t))/(1+exp(5*t))")
    rows = []
    _row(rows, "HSIE residual (N=256)", residual_1d(eq, x, 256).max, 1e-6)
    _row(rows, "ODE residual (N=256)", residual_reduced(ir, x, c, 256).max, 1e-8)
    N = 256
    t = c.point(Grid(N).s)
    exact = eval_expr(x, {"t": t})
    sol = solve_ode_rk(OdeProblem(ir, c, N, 0, (exact[0],)))
    _row(rows, "RK4 solution error", float(np.max(np.abs(sol.x.values - exact))), 1e-6)
    _row(rows, "RK4 holonomy", float(np.max(np.abs(sol.holonomy))), 1e-6)
    return rows


def _demo_ex612():
    eq = TwoDimEquation("0", "1", "2*t1+3", "0", "0", p=2)
    print("reduced:", render_pde(reduce_bi(eq)))
    X = solve_613(1, 2, 3)
    rows = []
    _row(rows, "HSIE residual (N=64)", residual_2d(eq, X, 64).max, 1e-8)
    _row(rows, "PDE residual (N=64)", residual_reduced(reduce_bi(eq), X, eq.contours, 64).max,
         1e-12)
    return rows


def _demo_ex614():
    eq = TwoDimEquation("0", "1", "1", "0", "2*x^3", p=3)
    print("reduced:", render_pde(reduce_bi(eq)))
    lap = PdeIR(const(0), const(1), const(1), const(0), parse_expr("4*x^3"), 2)
    rows = []
    for label, x in (("616", family_616(1, 4, 3, 10)), ("617", family_617(4, 3, 10, 10))):
        _row(rows, f"family {label}: Laplace residual", residual_reduced(lap, x, eq.contours, 64).max,
             1e-8)
        _row(rows, f"family {label}: HSIE residual", residual_2d(eq, x, 64).max, 1e-6)
    return rows


def _demo_fp_identity():
    c = Circle()
    N = 128
    rows = []
    for text in ("1", "t", "t^2", "t^3", "exp(2*t)", "1/(2+t^2)"):
        f = sample(c, Grid(N), parse_expr(text))
        worst = 0.0
        for p in (1, 2, 3):
            lhs = fp_integral_all(f, p).values
            rhs = spectral_derivative(f, p - 1).values / math.factorial(p - 1)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        _row(rows, f"identity x={text}", worst, 1e-8)
    x = parse_expr("exp(2*t)")
    worst = 0.0
    f = sample(c, Grid(N), x)
    for node in (0, 37, 90):
        for p in (1, 2, 3):
            spec = fp_integral(SingularIntegralSpec(f, p, node))
            worst = max(worst, abs(spec - fp_limit_oracle(x, c, p, node, N, normalize=True)))
    _row(rows, "oracle agreement x=exp(2*t)", worst, 1e-5)
    return rows


DEMOS = {"ex37": _demo_ex37, "ex43": _demo_ex43, "ex612": _demo_ex612, "ex614": _demo_ex614,
         "fp-identity": _demo_fp_identity}


def cmd_demo(args) -> int:
    t0 = time.perf_counter()
    rows = DEMOS[args.name]()
    width = max(len(r[0]) for r in rows)
    print(f"{'check':<{width}}  {'value':>10}  {'tolerance':>9}  result")
    for what, value, tol, ok in rows:
        print(f"{what:<{width}}  {value:10.3e}  {tol:9.1e}  {'PASS' if ok else 'FAIL'}")
    print(f"elapsed {time.perf_counter() - t0:.2f} s")
    return EXIT_OK if all(r[3] for r in rows) else EXIT_FAIL


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hsie", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    q = sub.add_parser("quad", help="evaluate a singular or finite-part integral")
    q.add_argument("--config", required=True)
    q.set_defaults(func=cmd_quad)
    r = sub.add_parser("reduce", help="reduce an integral equation to a differential one")
    r.add_argument("--config", required=True)
    r.add_argument("--print", action="store_true", help="human-readable rendering only")
    r.set_defaults(func=cmd_reduce)
    s = sub.add_parser("solve", help="integrate the reduced ODE along the contour")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="CSV file for the node samples")
    s.set_defaults(func=cmd_solve)
    v = sub.add_parser("verify", help="residual check of a candidate solution")
    v.add_argument("--config", required=True)
    v.add_argument("--report", help="write the JSON report here")
    v.add_argument("--per-node", action="store_true", help="include per-node residuals")
    v.set_defaults(func=cmd_verify)
    d = sub.add_parser("demo", help="run a built-in worked example")
    d.add_argument("name", choices=sorted(DEMOS))
    d.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default", AliasingWarning)
            return args.func(args)
    except KeyError as err:
        print(f"error: missing field: {err.args[0]}", file=sys.stderr)
    except ParseError as err:
        print(f"error: expression: {err}", file=sys.stderr)
    except (ConfigError, ReductionError, ValueError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
    except (EvalError, QuadratureError, SolveError, OverflowError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
