import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_rough import driver, kernel
from volterra_rough.errors import DriverError, GridError
from volterra_rough.grid import dyadic_partition
from volterra_rough.signature import TreeSymbol, VolterraSignature, chen_audit, chen_residual, outer

XG, WG = np.polynomial.legendre.leggauss(48)


def gl(fn, a, b):
    """Gauss-Legendre on [a, b] for fn mapping node arrays to (n, ...) values."""
    r = 0.5 * (b - a) * XG + 0.5 * (a + b)
    vals = np.asarray(fn(r))
    return np.tensordot(0.5 * (b - a) * WG, vals, axes=(0, 0))


def classical_oracle(x, s, t):
    """Iterated integrals of a smooth path by nested Gauss-Legendre."""
    inc = lambda r: x.value(r) - x.value(s)
    dx = x.derivative
    lvl2 = lambda r: np.einsum("na,nb->nab", dx(r), inc(r))
    i2 = lambda r1: np.stack([gl(lambda u: np.einsum("na,nb->nab", dx(u), inc(u)), s, v) for v in r1])
    return {
        "dot": inc(np.array(t)),
        "cherry": gl(lvl2, s, t),
        "chain3": gl(lambda r: np.einsum("na,nbc->nabc", dx(r), i2(r)), s, t),
        "vee": gl(lambda r: np.einsum("na,nb,nc->nabc", dx(r), inc(r), inc(r)), s, t),
    }


@pytest.fixture(scope="module")
def classical():
    x = driver.trig(1.0, [1.0, 0.0], [0.0, 1.0], [1.0, 2.0])
    return VolterraSignature(kernel.make_kernel("constant", 0.0), x), x


@pytest.mark.parametrize("sigma", ["dot", "cherry", "chain3", "vee"])
def test_constant_kernel_reduces_to_iterated_integrals(classical, sigma):
    sig, x = classical
    s, t = 0.125, 0.875
    want = classical_oracle(x, s, t)[sigma]
    got = sig.value(sigma, s, t, 1.0)
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9 * np.max(np.abs(want)))


def test_classical_shuffle_of_level_two(classical):
    # for a smooth path z^[.] + its transpose equals the tensor square of the increment
    sig, _ = classical
    c = sig.value("cherry", 0.2, 0.7, 0.7)
    np.testing.assert_allclose(c + c.T, sig.value("pair", 0.2, 0.7, 0.7), atol=1e-11)


@given(st.floats(0.05, 0.9), st.floats(0.0, 0.4), st.floats(0.05, 0.5))
def test_fractional_level_one_against_closed_form(gamma, s, h):
    sig = VolterraSignature(kernel.make_kernel("fractional", gamma), driver.linear(1.0))
    t, tau = s + h, min(1.0, s + h + 0.1)
    want = ((tau - s) ** (1 - gamma) - (tau - t) ** (1 - gamma)) / (1 - gamma)
    assert sig.value("dot", s, t, tau)[0] == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("gamma", [0.1, 0.25, 0.4])
def test_fractional_cherry_on_the_diagonal_is_a_beta_integral(gamma):
    # int_s^t (t-r)^-g (r-s)^(1-g)/(1-g) dr = (t-s)^(2-2g) B(2-g, 1-g) / (1-g)
    sig = VolterraSignature(kernel.make_kernel("fractional", gamma), driver.linear(1.0))
    s, t = 0.2, 0.9
    beta = math.gamma(2 - gamma) * math.gamma(1 - gamma) / math.gamma(3 - 2 * gamma)
    want = (t - s) ** (2 - 2 * gamma) * beta / (1 - gamma)
    assert sig.value("cherry", s, t, t)[0, 0] == pytest.approx(want, rel=1e-8)


def test_fractional_chain_of_three_on_the_diagonal():
    g = 0.25
    sig = VolterraSignature(kernel.make_kernel("fractional", g), driver.linear(1.0))
    B = lambda a, b: math.gamma(a) * math.gamma(b) / math.gamma(a + b)
    c2 = B(2 - g, 1 - g) / (1 - g)  # cherry = c2 (r - s)^(2 - 2g)
    want = 0.7 ** (3 - 3 * g) * c2 * B(3 - 2 * g, 1 - g)
    assert sig.value("chain3", 0.2, 0.9, 0.9)[0, 0, 0] == pytest.approx(want, rel=1e-7)


def test_chen_residuals_on_a_coarse_grid(frac_trig_sig):
    rows = chen_audit(frac_trig_sig, dyadic_partition((0, 1), 1))
    assert rows and max(r[-1] for r in rows) < 1e-6


def test_level_one_chen_relation_is_exact(frac_trig_sig):
    d = frac_trig_sig.value("dot", 0.1, 0.7, 0.9) - frac_trig_sig.value("dot", 0.4, 0.7, 0.9) \
        - frac_trig_sig.value("dot", 0.1, 0.4, 0.9)
    assert np.max(np.abs(d)) < 1e-13


def test_single_chen_residual_for_the_vee(frac_trig_sig):
    assert chen_residual(frac_trig_sig, "vee", 0.0, 0.5, 0.75, 1.0) < 1e-6


def test_values_broadcast_and_cache():
    g = dyadic_partition((0, 1), 2)
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), driver.linear(1.0, [1.0, 2.0]), grid=g)
    batch = sig.values("cherry", np.array([0.0, 0.25]), np.array([0.5, 0.75]), 1.0)
    assert batch.shape == (2, 2, 2)
    np.testing.assert_allclose(batch[1], sig.value("cherry", 0.25, 0.75, 1.0), rtol=1e-14)
    assert sig.cache_size() == 1
    sig.value("cherry", 0.3, 0.75, 1.0)  # off-grid, not memoized
    assert sig.cache_size() == 1


def test_dump_record_count():
    g = dyadic_partition((0, 1), 1)
    sig = VolterraSignature(kernel.make_kernel("constant", 0.0), driver.linear(1.0), grid=g)
    recs = sig.dump(("dot",))
    # tuples s < t <= tau on three points
    assert len(recs) == 4 and all(r["sigma"] == "dot" for r in recs)


def test_argument_order_is_checked(frac_trig_sig):
    with pytest.raises(GridError):
        frac_trig_sig.value("dot", 0.5, 0.2, 0.9)
    with pytest.raises(GridError):
        frac_trig_sig.value("dot", 0.1, 0.2, 1.5)


def test_tree_symbol_parsing():
    assert TreeSymbol.parse("vee") is TreeSymbol.parse(TreeSymbol.VEE)
    assert TreeSymbol.CHAIN3.vertices == 3 and TreeSymbol.DOT.vertices == 1


def test_outer_product_shapes():
    a = np.arange(6.0).reshape(3, 2)
    b = np.arange(12.0).reshape(3, 4)
    out = outer(a, b)
    assert out.shape == (3, 2, 4)
    assert out[2, 1, 3] == a[2, 1] * b[2, 3]


def test_kinked_path_over_work_cap_is_refused():
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), driver.sample_fbm(0.7, 1024, seed=0))
    assert sig.value("dot", 0.0, 1.0, 1.0).shape == (1,)
    with pytest.raises(DriverError, match="fewer samples"):
        sig.value("cherry", 0.0, 1.0, 1.0)


def test_chen_on_short_fbm_path():
    x = driver.sample_fbm(0.7, 8, seed=3)
    g = dyadic_partition((0, 1), 1)
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), x, grid=g)
    assert max(r[-1] for r in chen_audit(sig, g)) < 1e-9
