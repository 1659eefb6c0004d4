import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_rough.errors import ExponentError, NonCauchy, SingularBase
from volterra_rough.sewing import (SewingExponents, dyadic_cells, fit_rate, pairwise_sum, probe_integrand,
                                   riemann_sum, sew_double, sew_single)


def test_additive_integrand_sews_at_level_zero():
    # xi = g(t) - g(s) is exactly additive, every Riemann sum equals the increment
    xi = lambda s, t, tau: np.sin(3 * t) - np.sin(3 * s)
    val, diag = sew_single(xi, SewingExponents(1.5, 0.0), (0.1, 0.9), 1.0)
    assert val == pytest.approx(np.sin(2.7) - np.sin(0.3), abs=1e-15)
    assert diag.converged and max(diag.level_diffs) < 1e-14


def test_midpoint_defect_example():
    # two-term Taylor germ of r^2: local error (t - s)^3 / 3, so the sums converge at rate 2
    xi = lambda s, t, tau: s**2 * (t - s) + s * (t - s) ** 2
    val, diag = sew_single(xi, SewingExponents(3.0, 0.0), (0.0, 1.0), 1.0, tol=0.0, max_level=14,
                           vectorized=True)
    assert val == pytest.approx(1 / 3, abs=1e-8)
    assert diag.fitted_slope == pytest.approx(2.0, abs=0.01)


def test_sewing_is_linear_in_the_integrand():
    a = probe_integrand(1.5, 0.2)
    b = lambda s, t, tau: (t - s) ** 2
    exps = SewingExponents(1.5, 0.2)
    kw = dict(tol=1e-13, max_level=16, vectorized=True)
    va, _ = sew_single(a, exps, (0.0, 0.5), 0.7, **kw)
    vb, _ = sew_single(b, exps, (0.0, 0.5), 0.7, **kw)
    vab, _ = sew_single(lambda s, t, tau: 2 * a(s, t, tau) - 3 * b(s, t, tau), exps, (0.0, 0.5), 0.7, **kw)
    assert vab == pytest.approx(2 * va - 3 * vb, abs=1e-9)


def test_sewn_values_are_additive_over_adjacent_intervals():
    xi = probe_integrand(2.5, 0.25)
    exps = SewingExponents(2.5, 0.25)
    kw = dict(tol=0.0, max_level=20, vectorized=True)
    whole, _ = sew_single(xi, exps, (0.0, 0.5), 0.5, **kw)
    left, _ = sew_single(xi, exps, (0.0, 0.25), 0.5, **kw)
    right, _ = sew_single(xi, exps, (0.25, 0.5), 0.5, **kw)
    assert whole == pytest.approx(left + right, abs=1e-8)
    # the bump sums to zero in the limit, leaving the closed-form base part
    assert whole == pytest.approx(0.5**0.75 / 0.75, abs=1e-8)


def test_probe_rate_single_and_double():
    for theta, rate in [(0.0, 0.45), (0.3, 0.45)]:
        xi = probe_integrand(1.45, 0.25, theta)
        if theta:
            _, diag = sew_double(xi, SewingExponents(1.45, 0.25, theta), 0.0, (0.1, 0.6), 0.8, tol=0.0,
                                 max_level=12, vectorized=True)
        else:
            _, diag = sew_single(xi, SewingExponents(1.45, 0.25), (0.0, 1.0), 1.0, tol=0.0, max_level=12,
                                 vectorized=True)
        assert diag.slope_between(4, 12) >= rate - 0.1


def test_non_cauchy_integrand_is_reported():
    # defect of order exactly 1: the sums never settle
    xi = lambda s, t, tau: np.sqrt(t - s)
    with pytest.raises(NonCauchy):
        sew_single(xi, SewingExponents(1.5, 0.0), (0.0, 1.0), 1.0, tol=0.0, max_level=14, vectorized=True)


@pytest.mark.parametrize("args", [(1.0, 0.0), (1.5, 1.0), (1.5, 0.6, 0.5), (1.5, 0.0, -0.1), (1.2, 0.7, 0.6)])
def test_exponent_validation(args):
    with pytest.raises(ExponentError):
        SewingExponents(*args)


def test_double_sewing_checks_the_base_point():
    xi = probe_integrand(1.5, 0.0, 0.5)
    exps = SewingExponents(1.5, 0.0, 0.5)
    with pytest.raises(ExponentError):
        sew_double(xi, exps, 0.3, (0.2, 0.5), 1.0)
    with pytest.raises(ExponentError):
        sew_single(xi, exps, (0.2, 0.5), 1.0)
    with pytest.raises(SingularBase):
        sew_double(xi, SewingExponents(2.5, 0.0, 1.2), 0.2, (0.2, 0.5), 1.0)


def test_fit_rate_needs_three_points():
    assert fit_rate([1, 2], [0.5, 0.25]) is None
    assert fit_rate([1, 2, 3, 4], [0.5, 0.25, 0.125, 0.0]) == pytest.approx(1.0)


@given(st.integers(0, 7))
def test_dyadic_cells_tile_the_interval(level):
    u, v = dyadic_cells(0.2, 0.9, level)
    assert u[0] == 0.2 and v[-1] == 0.9 and np.all(u[1:] == v[:-1])
    assert riemann_sum(lambda a, b: b - a, 0.2, 0.9, level, vectorized=True) == pytest.approx(0.7, abs=1e-15)


@given(st.lists(st.floats(-1e3, 1e3), min_size=0, max_size=33))
def test_pairwise_sum_matches_fsum(vals):
    import math
    assert float(pairwise_sum(np.array(vals))) == pytest.approx(math.fsum(vals), abs=1e-9)
