import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_rough.errors import KernelError
from volterra_rough.grid import dyadic_partition
from volterra_rough.kernel import audit_bounds, make_kernel


def test_kernel_examples():
    assert make_kernel("fractional", 0.5).eval(1.0, 0.75) == pytest.approx(2.0)
    assert make_kernel("fractional", 0.5).primitive(1.0, 0.0, 1.0) == pytest.approx(2.0)
    assert make_kernel("constant", 0.0).primitive(5.0, 1.0, 3.0) == pytest.approx(2.0)
    assert make_kernel("damped_fractional", 0.3).primitive is None


@pytest.mark.parametrize("family, gamma", [("fractional", 0.0), ("fractional", 1.0), ("constant", -0.1),
                                           ("bessel", 0.2)])
def test_kernel_rejects_bad_parameters(family, gamma):
    with pytest.raises(KernelError):
        make_kernel(family, gamma)


@given(st.floats(0.01, 0.95), st.floats(0.0, 0.99))
def test_fractional_kernel_scaling(gamma, r):
    k = make_kernel("fractional", gamma)
    assert k.eval(1.0, r) * (1.0 - r) ** gamma == pytest.approx(1.0, rel=1e-13)


@given(st.floats(0.05, 0.9), st.floats(0.0, 0.3), st.floats(0.35, 0.6), st.floats(0.65, 0.99))
def test_primitive_is_additive(gamma, a, b, c):
    k = make_kernel("fractional", gamma)
    lhs = k.primitive(1.0, a, b) + k.primitive(1.0, b, c)
    assert lhs == pytest.approx(k.primitive(1.0, a, c), rel=1e-12)


def test_primitive_matches_quadrature():
    k = make_kernel("fractional", 0.3)
    # smooth sub-interval away from the singularity
    x, w = np.polynomial.legendre.leggauss(40)
    r = 0.35 + 0.25 * x
    val = 0.25 * np.sum(w * k.eval(1.0, r))
    assert k.primitive(1.0, 0.1, 0.6) == pytest.approx(val, rel=1e-10)


def test_constant_kernel_audit_has_vanishing_differences():
    rep = audit_bounds(make_kernel("constant", 0.0), dyadic_partition((0, 1), 3))
    assert rep.constants[0] <= 1.0
    assert rep.constants[1:] == [0.0, 0.0, 0.0, 0.0]


def test_fractional_audit_level5_constants_are_moderate():
    rep = audit_bounds(make_kernel("fractional", 0.25), dyadic_partition((0, 1), 5))
    assert all(np.isfinite(rep.constants)) and max(rep.constants) < 10
    # the exclusion band is a quarter of the spacing, so no grid tuple falls inside it
    assert rep.skipped == 0 and rep.n_tuples == 40920
    # regression baseline from the brute-force sweep
    np.testing.assert_allclose(rep.constants, [1.0, 0.5762013425849783, 0.5, 0.42796914712140494,
                                               0.42796914712140494], rtol=1e-12)
    assert rep.to_dict()["etas"] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_python_and_compiled_audits_agree():
    from volterra_rough import _backend
    k = make_kernel("damped_fractional", 0.4)
    pts = dyadic_partition((0, 1), 3).points
    sweep = np.array([0.0, 0.5, 1.0])
    a = _backend.python.kernel_audit(k.family_code, k.power, k.gamma, pts, sweep, sweep, 0.01)
    b = _backend.core.kernel_audit(k.family_code, k.power, k.gamma, pts, sweep, sweep, 0.01)
    for va, vb in zip(a[0], b[0]):
        np.testing.assert_allclose(va, vb, rtol=1e-12)
    assert a[2:] == b[2:]


def test_strong_singularity_audit_stays_finite():
    rep = audit_bounds(make_kernel("fractional", 0.9), dyadic_partition((0, 1), 4))
    assert all(np.isfinite(rep.constants))


def test_audit_rejects_sweep_outside_unit_interval():
    with pytest.raises(KernelError):
        audit_bounds(make_kernel("fractional", 0.25), dyadic_partition((0, 1), 2), etas=[1.5])
