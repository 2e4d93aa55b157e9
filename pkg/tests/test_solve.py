import csv
import io

import numpy as np
import pytest

import hsie.solve as solve_mod
from hsie.contour import Circle
from hsie.expr import Num, eval_expr, parse_expr
from hsie.reduce import (HsieTerm, NonlinearEquation, OdeIR, OneDimEquation, reduce_linear,
                         reduce_nonlinear)
from hsie.solve import (FamilyError, OdeProblem, SolveError, StepError, basis_condition,
                        family_616, family_617, homogeneous_basis, initial_from_candidate,
                        pde_residual_samples, solve_613, solve_linear_first_order, solve_ode_rk)

C = Circle(0, 0.5)
LINEAR_EXP = OneDimEquation((HsieTerm("1"), HsieTerm("2+t^2", p=2)), "(5+2*t^2)*exp(2*t)", C)
RICCATI = parse_expr("(1-4*exp(5*t))/(1+exp(5*t))")
P_LIN = parse_expr("1/(2+t^2)")
Q_LIN = parse_expr("(5+2*t^2)*exp(2*t)/(2+t^2)")


def problem(ir, initial, contour=C, N=128, **kw):
    return OdeProblem(ir, contour, N, initial=initial, **kw)


def exp2t_problem(N=128, start=0):
    ir = reduce_linear(LINEAR_EXP)
    t0 = complex(C.point(2 * np.pi * start / N))
    return problem(ir, (np.exp(2 * t0),), N=N, start=start)


def test_closed_form_first_order():
    sol = solve_linear_first_order(P_LIN, Q_LIN, exp2t_problem())
    assert np.max(np.abs(sol.x.values - np.exp(2 * sol.x.t))) <= 1e-8
    assert abs(sol.holonomy[0]) <= 1e-8
    assert np.max(np.abs(sol.derivatives[0].values - 2 * np.exp(2 * sol.x.t))) <= 1e-8


def test_closed_form_other_start():
    sol = solve_linear_first_order(P_LIN, Q_LIN, exp2t_problem(start=37))
    assert np.max(np.abs(sol.x.values - np.exp(2 * sol.x.t))) <= 1e-8


def test_closed_form_separable():
    lam = 1.5 - 0.5j
    c = Circle(0.2, 1)
    ir = OdeIR("linear", 1, Num(0), (Num(lam), Num(1)))
    pr = problem(ir, (2.0,), contour=c, N=64)
    sol = solve_linear_first_order(Num(lam), Num(0), pr)
    expect = 2 * np.exp(-lam * (sol.x.t - pr.t0))
    assert np.max(np.abs(sol.x.values - expect)) <= 1e-10


def test_closed_form_antiderivative():
    ir = OdeIR("linear", 1, parse_expr("2*exp(2*t)"), (Num(0), Num(1)))
    t0 = complex(C.point(0))
    sol = solve_linear_first_order(Num(0), parse_expr("2*exp(2*t)"),
                                   problem(ir, (np.exp(2 * t0),)))
    assert np.max(np.abs(sol.x.values - np.exp(2 * sol.x.t))) <= 1e-9


def test_closed_form_overflow():
    ir = OdeIR("linear", 1, Num(0), (Num(800), Num(1)))
    with pytest.raises(OverflowError, match="max"):
        solve_linear_first_order(Num(800), Num(0), problem(ir, (1,), contour=Circle(), N=64))


def test_rk_first_order():
    sol = solve_ode_rk(exp2t_problem())
    assert np.max(np.abs(sol.x.values - np.exp(2 * sol.x.t))) <= 1e-6
    assert np.max(np.abs(sol.holonomy)) <= 1e-6
    assert sol.max_step_error <= 1e-10


def test_rk_agrees_with_closed_form():
    pr = exp2t_problem()
    a = solve_ode_rk(pr).x.values
    b = solve_linear_first_order(P_LIN, Q_LIN, pr).x.values
    assert np.max(np.abs(a - b)) <= 1e-6


def test_rk_riccati():
    ir = reduce_nonlinear(NonlinearEquation("S2 - S1^2 - 3*S1", "-4", C))
    init = initial_from_candidate(RICCATI, C, 256, 0, 1)
    sol = solve_ode_rk(problem(ir, init, N=256))
    exact = eval_expr(RICCATI, {"t": sol.x.t})
    assert np.max(np.abs(sol.x.values - exact)) <= 1e-6
    assert np.max(np.abs(sol.holonomy)) <= 1e-6


def test_rk_second_order_polynomial():
    ir = reduce_linear(OneDimEquation((HsieTerm("0"), HsieTerm("1", p=3)), "6*t", C))
    t0 = complex(C.point(0))
    sol = solve_ode_rk(problem(ir.normalized(), (2 * t0 ** 3, 6 * t0 ** 2), N=64))
    assert np.max(np.abs(sol.x.values - 2 * sol.x.t ** 3)) <= 1e-8
    assert np.max(np.abs(sol.derivatives[0].values - 6 * sol.x.t ** 2)) <= 1e-8


def test_holonomy_subdivision_rule():
    ir = reduce_nonlinear(NonlinearEquation("S2 - S1^2 - 3*S1", "-4", C))
    init = initial_from_candidate(RICCATI, C, 256, 0, 1)
    coarse = abs(solve_ode_rk(problem(ir, init, N=256, subdivision=1)).holonomy[0])
    fine = abs(solve_ode_rk(problem(ir, init, N=256, subdivision=2)).holonomy[0])
    assert coarse <= 1e-6
    # adaptive control keeps both near the step-tolerance floor
    assert fine <= max(coarse / 8, 1e-9)


def test_homogeneous_basis_first_order():
    ir = reduce_linear(LINEAR_EXP)
    pr = exp2t_problem()
    (basis,) = homogeneous_basis(ir, pr)
    t, t0 = basis.x.t, pr.t0
    r2 = np.sqrt(2)
    expect = np.exp(-(np.arctan(t / r2) - np.arctan(t0 / r2)) / r2)
    assert np.max(np.abs(basis.x.values - expect)) <= 1e-6
    assert basis_condition([basis]) < 1e6


def test_homogeneous_basis_trivial():
    first = OdeIR("linear", 1, Num(0), (Num(0), Num(1)))
    (one,) = homogeneous_basis(first, problem(first, (0,), N=32))
    assert np.max(np.abs(one.x.values - 1)) <= 1e-12
    second = OdeIR("linear", 2, Num(0), (Num(0), Num(0), Num(1)))
    pr = problem(second, (0, 0), N=32)
    b0, b1 = homogeneous_basis(second, pr)
    assert np.max(np.abs(b0.x.values - 1)) <= 1e-10
    assert np.max(np.abs(b1.x.values - (b1.x.t - pr.t0))) <= 1e-10
    assert basis_condition([b0, b1]) < 1e6


def test_homogeneous_requires_linear():
    ir = reduce_nonlinear(NonlinearEquation("S2 - S1^2", "0", C))
    with pytest.raises(SolveError):
        homogeneous_basis(ir, problem(ir, (0,)))


def test_problem_validation():
    ir = reduce_linear(LINEAR_EXP)
    with pytest.raises(ValueError, match="initial"):
        problem(ir, ())
    with pytest.raises(ValueError):
        problem(ir, (1,), subdivision=0)
    with pytest.raises(ValueError):
        problem(ir, (1,), start=128)
    with pytest.raises(ValueError):
        problem(ir, (1,), N=100)


def test_non_affine_rejected():
    ir = reduce_nonlinear(NonlinearEquation("S2^2 - S1", "0", C))
    with pytest.raises(SolveError, match="affine"):
        solve_ode_rk(problem(ir, (1,)))


def test_step_error(monkeypatch):
    monkeypatch.setattr(solve_mod, "MAX_REFINE", 0)
    ir = OdeIR("linear", 1, Num(0), (Num(1000), Num(1)))
    with pytest.raises(StepError):
        solve_ode_rk(problem(ir, (1,), contour=Circle(), N=16, subdivision=1))


def test_rhs_singular_on_path():
    ir = OdeIR("linear", 1, parse_expr("1/(t-0.5)"), (Num(0), Num(1)))
    with pytest.raises(SolveError):
        solve_ode_rk(problem(ir, (0,), N=16))


def test_csv_columns():
    ir = reduce_linear(OneDimEquation((HsieTerm("0"), HsieTerm("1", p=3)), "6*t", C))
    t0 = complex(C.point(0))
    sol = solve_ode_rk(problem(ir, (2 * t0 ** 3, 6 * t0 ** 2), N=16))
    rows = list(csv.reader(io.StringIO(sol.to_csv())))
    assert rows[0] == ["j", "s_j", "Re t", "Im t", "Re x", "Im x", "Re x'", "Im x'"]
    assert len(rows) == 17
    assert complex(float(rows[5][4]), float(rows[5][5])) == sol.x.values[4]


def test_family_616_examples():
    x = family_616(1, 4, 3, 10)
    assert abs(eval_expr(x, {"t1": 0.3, "t2": 0.1j}) - 1 / (10.3 + 0.1j)) <= 1e-14
    assert abs(eval_expr(x, {"t1": 0.2, "t2": -0.4}) - 1 / 9.8) <= 1e-14
    y = family_616(0, 6, 2, 10)
    assert abs(eval_expr(y, {"t1": 0.7, "t2": 0.3}) - 10.3 ** -2) <= 1e-14
    assert np.max(np.abs(pde_residual_samples(y, 6, 2, (Circle(), Circle())))) <= 1e-10
    neg = family_616(1, 4, 3, 10, sign=-1)
    assert abs(eval_expr(neg, {"t1": 0.2, "t2": 0.2}) - 1 / 10) <= 1e-14


def test_family_616_complex_b():
    x = family_616(2, 4, 3, 10)
    res = pde_residual_samples(x, 4, 3, (Circle(), Circle()))
    assert np.max(np.abs(res)) <= 1e-8


def test_family_616_errors():
    with pytest.raises(FamilyError):
        family_616(1, 4, 3, 0)
    with pytest.raises(FamilyError):
        family_616(1, 4, 1, 10)
    with pytest.raises(ValueError):
        family_616(1, 4, 3, 10, sign=2)


def test_family_617_examples():
    x = family_617(4, 3, 10, 10)
    t1, t2 = 0.3, -0.2j
    rho2 = (t1 + 10) ** 2 + (t2 + 10) ** 2
    assert abs(eval_expr(x, {"t1": t1, "t2": t2}) - 0.5 * rho2 ** -0.5) <= 1e-14
    y = family_617(1, 2, 100, 100)
    assert abs(eval_expr(y, {"t1": 0, "t2": 0}) - 4 / 20000) <= 1e-15
    assert np.max(np.abs(pde_residual_samples(y, 1, 2, (Circle(), Circle())))) <= 1e-10
    with pytest.raises(FamilyError):
        family_617(4, 3, 0, 0)


def test_solve_613_examples():
    X = solve_613(1, 2, 3)
    assert abs(eval_expr(X, {"t1": 0.5, "t2": 0.25}) - (0.25 + 1.5 - 0.25)) <= 1e-15
    Y = solve_613(1, 0, 0)
    assert eval_expr(Y, {"t1": 0.3, "t2": 0.7}) == pytest.approx(-0.7)
    Z = solve_613(0, 0, 1)
    assert eval_expr(Z, {"t1": 0.3, "t2": 0.7}) == pytest.approx(0.3)
    with pytest.raises(FamilyError):
        solve_613(0, 0, 0)


def test_initial_from_candidate():
    vals = initial_from_candidate(parse_expr("exp(2*t)"), C, 64, 0, 3)
    assert np.allclose(vals, [np.e, 2 * np.e, 4 * np.e], atol=1e-12)
