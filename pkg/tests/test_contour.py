import numpy as np
import pytest

from hsie.contour import (AliasingWarning, Circle, CustomPeriodic, Grid, GridFn, SampleError,
                          contour_from_json, fourier_coeffs, from_fourier_coeffs,
                          partial_derivative, sample, sample2, spectral_derivative,
                          validate_analyticity, winding_number)
from hsie.expr import diff_at, parse_expr


def ellipse(n=256, a=0.6, b=0.4, excluded=()):
    s = 2 * np.pi * np.arange(n) / n
    return CustomPeriodic(a * np.cos(s) + 1j * b * np.sin(s),
                          -a * np.sin(s) + 1j * b * np.cos(s), excluded)


def test_grid_validation():
    assert Grid(16).h == pytest.approx(2 * np.pi / 16)
    assert np.all(np.diff(Grid(64).s) > 0)
    for bad in (8, 48, 8192):
        with pytest.raises(ValueError):
            Grid(bad)


def test_circle_validation():
    with pytest.raises(ValueError):
        Circle(radius=0)
    # inside points are accepted; validate_analyticity reports them
    assert Circle(radius=1, excluded=(0.5,)).excluded == (0.5,)


def test_sample_examples():
    assert np.all(sample(Circle(), Grid(16), parse_expr("1")).values == 1)
    f = sample(Circle(0, 0.5), Grid(64), parse_expr("exp(2*t)"))
    assert f.values[0] == pytest.approx(np.e, abs=1e-15)
    g = sample(Circle(1, 1), Grid(32), parse_expr("t^2"))
    assert g.values[8] == pytest.approx(2j, abs=1e-14)


def test_sample_error_reports_node():
    with pytest.raises(SampleError) as info:
        sample(Circle(0, 1), Grid(16), parse_expr("1/(t-1)"))
    assert info.value.node == 0


def test_spectral_derivative_examples():
    c = Circle(0, 0.5)
    const7 = sample(c, Grid(64), parse_expr("7"))
    assert np.max(np.abs(spectral_derivative(const7, 1).values)) <= 1e-12
    e = parse_expr("exp(2*t)")
    f = sample(c, Grid(64), e)
    oracle = np.array([diff_at(e, "t", z, 1, 0.05) for z in f.t])
    assert np.max(np.abs(spectral_derivative(f, 1).values - oracle)) <= 1e-10
    cube = sample(Circle(0, 1), Grid(64), parse_expr("t^3"))
    assert np.max(np.abs(spectral_derivative(cube, 2).values - 6 * cube.t)) <= 1e-10


def test_spectral_derivative_linear():
    c, g = Circle(), Grid(128)
    f1 = sample(c, g, parse_expr("exp(2*t)"))
    f2 = sample(c, g, parse_expr("1/(2+t^2)"))
    a, b = 1.5 - 2j, 0.25j
    lhs = spectral_derivative(f1 * a + f2 * b, 2).values
    rhs = a * spectral_derivative(f1, 2).values + b * spectral_derivative(f2, 2).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1, np.max(np.abs(lhs)))


@pytest.mark.parametrize("a,b", [(1, 1), (1, 2), (2, 3)])
def test_spectral_derivative_composes(a, b):
    f = sample(Circle(), Grid(128), parse_expr("exp(2*t)*cos(t)"))
    twice = spectral_derivative(spectral_derivative(f, a), b).values
    once = spectral_derivative(f, a + b).values
    assert np.max(np.abs(twice - once)) <= 1e-9


def test_spectral_derivative_converges():
    e = parse_expr("exp(2*t)")
    c = Circle()
    errs = []
    for n in (32, 64, 128):
        f = sample(c, Grid(n), e)
        exact = 4 * np.exp(2 * f.t)
        errs.append(np.max(np.abs(spectral_derivative(f, 2).values - exact)))
    for coarse, fine in zip(errs, errs[1:]):
        assert fine <= max(coarse / 10, 1e-12)


def test_aliasing_warning():
    f = sample(Circle(0, 0.5), Grid(16), parse_expr("exp(4*t)"))
    with pytest.warns(AliasingWarning):
        spectral_derivative(f, 1)
    with pytest.raises(ValueError):
        spectral_derivative(f, 9)


def test_custom_contour_derivative():
    c = ellipse()
    f = sample(c, Grid(128), parse_expr("exp(t)*t"))
    exact = np.exp(f.t) * (1 + f.t)
    assert np.max(np.abs(spectral_derivative(f, 1).values - exact)) <= 1e-10
    assert c.inside(0.1) and not c.inside(0.55j)


def test_fourier_coeffs_examples():
    c = Circle(1 + 1j, 0.5)
    g = Grid(32)
    f = sample(c, g, parse_expr("(t-(1+i))/0.5"))
    coef = fourier_coeffs(f)
    assert abs(coef[1] - 1) <= 1e-14
    assert np.max(np.abs(np.delete(coef, 1))) <= 1e-14
    three = fourier_coeffs(sample(c, g, parse_expr("3")))
    assert abs(three[0] - 3) <= 1e-14 and np.max(np.abs(three[1:])) <= 1e-14
    sq = fourier_coeffs(sample(c, g, parse_expr("(t-(1+i))^2")))
    assert abs(sq[2] - 0.25) <= 1e-14 and np.max(np.abs(np.delete(sq, 2))) <= 1e-14
    back = from_fourier_coeffs(fourier_coeffs(f))
    assert np.max(np.abs(back - f.values)) <= 1e-13


def test_validate_analyticity_examples():
    ok = validate_analyticity(Circle(0, 0.5, excluded=(1j, -1j, 2 ** 0.5 * 1j, -(2 ** 0.5) * 1j)))
    assert ok
    assert validate_analyticity(Circle(0, 0.5))


def test_validate_analyticity_flags_inside_point():
    res = validate_analyticity(Circle(0, 2, excluded=(1j,)))
    assert not res and res.offending == (1j,)
    assert not validate_analyticity(ellipse(excluded=(0.1,)))
    assert validate_analyticity(ellipse(excluded=(2,)))


def test_winding_number():
    pts = Circle(0, 1).point(Grid(64).s)
    assert winding_number(pts, 0.2) == 1
    assert winding_number(pts, 3) == 0


def test_contour_json_roundtrip():
    c = Circle(0.5 - 1j, 0.25, excluded=(2 + 0j,))
    assert contour_from_json(c.to_json()) == c
    e = ellipse(32)
    back = contour_from_json(e.to_json())
    assert np.allclose(back.point(Grid(32).s), e.point(Grid(32).s))
    with pytest.raises(KeyError, match="radius"):
        contour_from_json({"kind": "circle", "center": [0, 0]})


def test_gridfn_shape_checked():
    with pytest.raises(ValueError):
        GridFn(Circle(), Grid(16), np.zeros(8))


def test_partial_derivative_2d():
    cs = (Circle(), Circle(0.1, 0.4))
    gs = (Grid(32), Grid(64))
    f = sample2(cs, gs, parse_expr("exp(t1)*t2^3"))
    t1 = cs[0].point(gs[0].s)[:, None]
    t2 = cs[1].point(gs[1].s)[None, :]
    d = partial_derivative(partial_derivative(f, 0, 1), 1, 2).values
    assert np.max(np.abs(d - np.exp(t1) * 6 * t2)) <= 1e-11
