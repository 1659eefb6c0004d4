import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_rough import driver
from volterra_rough.errors import DriverError
from volterra_rough.grid import dyadic_partition


def test_linear_and_trig_values():
    x = driver.linear(2.0, [1.0, -3.0])
    np.testing.assert_allclose(x.value(0.5), [0.5, -1.5])
    np.testing.assert_allclose(x.derivative(np.array([0.1, 1.9])), [[1.0, -3.0]] * 2)
    y = driver.trig(1.0, [1.0, 0.0], [0.0, 1.0], [1.0, 2.0])
    np.testing.assert_allclose(y.value(0.3), [np.sin(0.3), np.cos(0.6)], rtol=1e-14)
    assert y.value(np.zeros(4)).shape == (4, 2)


def test_increment_rejects_times_outside_horizon():
    x = driver.linear(1.0)
    with pytest.raises(DriverError):
        driver.increment(x, 0.0, 1.5)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_piecewise_linear_interpolates(a, b):
    times = np.array([0.0, 0.5, 1.0])
    vals = np.array([[0.0], [a], [b]])
    x = driver.piecewise_linear(times, vals)
    np.testing.assert_allclose(x.value(0.25), [a / 2])
    np.testing.assert_allclose(x.value(0.75), [(a + b) / 2])
    np.testing.assert_allclose(x.derivative(0.6), [2 * (b - a)])


def test_holder_norm_of_linear_path():
    g = dyadic_partition((0, 1), 4)
    assert driver.holder_norm(driver.linear(1.0, 2.0), 1.0, g) == pytest.approx(2.0)
    # sqrt(t) has 1/2-Hölder constant 1, attained at s = 0
    x = driver.analytic(lambda t: np.sqrt(t)[..., None], lambda t: (0.5 / np.sqrt(np.maximum(t, 1e-300)))[..., None],
                        1, 1.0)
    assert driver.holder_norm(x, 0.5, g) == pytest.approx(1.0)


def test_fgn_autocovariance_of_brownian_increments_is_white():
    np.testing.assert_allclose(driver.fgn_autocovariance(0.5, 4), [1, 0, 0, 0, 0], atol=1e-15)


def test_fbm_is_seeded_and_reproducible():
    a = driver.sample_fbm(0.3, 64, seed=7, dim=2)
    b = driver.sample_fbm(0.3, 64, seed=7, dim=2)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.values.shape == (65, 2) and np.all(a.values[0] == 0)
    assert a.alpha_hint == 0.3


def test_fbm_variance_matches_hurst_scaling():
    # Var(B_T) = T^{2H}; Monte-Carlo over seeds
    H, T = 0.3, 1.0
    ends = np.array([driver.sample_fbm(H, 32, seed=s, T=T).values[-1, 0] for s in range(400)])
    assert ends.var() == pytest.approx(T ** (2 * H), rel=0.2)


def test_fbm_increment_covariance_matches_fgn(rng):
    H, n = 0.7, 16
    inc = np.stack([np.diff(driver.sample_fbm(H, n, seed=s).values[:, 0]) for s in range(3000)])
    emp = np.mean(inc[:, :-1] * inc[:, 1:]) / np.mean(inc**2)
    assert emp == pytest.approx(2 ** (2 * H - 1) - 1, abs=0.05)


@pytest.mark.parametrize("kwargs", [dict(hurst=0.0, n=4, seed=0), dict(hurst=0.5, n=0, seed=0),
                                    dict(hurst=0.5, n=4, seed=0, T=-1.0)])
def test_fbm_rejects_bad_arguments(kwargs):
    with pytest.raises(DriverError):
        driver.sample_fbm(**kwargs)


def test_from_csv_round_trip(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("t,x1,x2\n0,0,0\n0.5,1,2\n1,0,1\n")
    x = driver.from_csv(str(p), alpha_hint=0.5)
    np.testing.assert_allclose(x.value(0.25), [0.5, 1.0])
    assert x.T == 1.0 and x.dim == 2


def test_from_csv_rejects_missing_header(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DriverError):
        driver.from_csv(str(p))


def test_fbm_holder_norm_baseline():
    x = driver.sample_fbm(0.5, 256, seed=2024)
    g = dyadic_partition((0, 1), 8)
    pts = np.asarray(g.points)
    vals = x.values[:, 0]  # grid points coincide with the samples
    brute = max(abs(vals[j] - vals[i]) / (pts[j] - pts[i]) ** 0.45
                for i in range(pts.size) for j in range(i + 1, pts.size))
    got = driver.holder_norm(x, 0.45, g)
    assert got == pytest.approx(brute, rel=1e-12)
    assert got == pytest.approx(2.536312712885824, rel=1e-12)  # recorded on this seed
    assert got >= driver.holder_norm(x, 0.45, dyadic_partition((0, 1), 6))
