import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_rough import controlled as C
from volterra_rough import driver, kernel
from volterra_rough import solver as S
from volterra_rough.errors import ExponentError, InitialBundleMismatch, StepUnderflow, ValidationError
from volterra_rough.signature import VolterraSignature


def test_choose_step_examples():
    # M = 0 leaves the remaining horizon
    assert S.choose_step(0.0, 3.0, 0.8, 0.6, 1.0, 0.7) == 0.7
    # contraction only: (2 C M)^(-1/(alpha-beta)) = (2*2)^(-5) = 1/1024
    assert S.choose_step(2.0, 0.0, 0.8, 0.6, 1.0, 1.0, ball=False) == pytest.approx(4.0**-5)
    # ball: C M (1+M)^3 (1+Q^3) = 1*1*8*1 = 8, 8^(-5) = 2^-15 < contraction bound 2^-5
    assert S.choose_step(1.0, 0.0, 0.8, 0.6, 1.0, 1.0, T=1.0) == pytest.approx(2.0**-15)
    assert S.choose_step(1.0, 0.0, 0.8, 0.6, 1.0, 1.0, ball=False) == pytest.approx(2.0**-5)


@given(st.floats(0.01, 4.0), st.floats(0.01, 4.0), st.floats(0.0, 5.0))
def test_choose_step_shrinks_as_bounds_grow(m1, m2, q):
    lo, hi = sorted((m1, m2))
    a = S.choose_step(lo, q, 0.8, 0.6, 1.0, 1.0, ball=False)
    b = S.choose_step(hi, q, 0.8, 0.6, 1.0, 1.0, ball=False)
    assert b <= a


def test_choose_step_underflow_and_argument_checks():
    with pytest.raises(StepUnderflow):
        S.choose_step(1e3, 10.0, 0.8, 0.6, 1.0, 1.0)
    with pytest.raises(ExponentError):
        S.choose_step(1.0, 1.0, 0.6, 0.6, 1.0, 1.0)
    with pytest.raises(ValidationError):
        S.choose_step(-1.0, 1.0, 0.8, 0.6, 1.0, 1.0)


@pytest.mark.parametrize("kw", [dict(alpha=0.5, gamma=0.25), dict(alpha=0.8, gamma=1.0),
                                dict(alpha=0.8, gamma=0.25, beta=0.9), dict(alpha=0.8, gamma=0.25, step_shrink=1.0)])
def test_options_validation(kw):
    with pytest.raises(ValidationError):
        S.SolverOptions(**kw)


def test_default_beta_sits_between_the_constraints():
    o = S.SolverOptions(alpha=0.8, gamma=0.25)
    assert o.beta == pytest.approx(0.8 - 0.15) and o.beta - o.gamma > 0.25
    assert o.first_grading() == pytest.approx(1 / 0.75)


def test_picard_map_with_constant_field_is_the_kernel_primitive():
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), driver.linear(1.0))
    f = C.builtin_function("constant", m=1, d=1)
    out = S.picard_map(sig, f, S.seed_path(f, [0.5], 1), (0.0, 0.5), S.SolverOptions(alpha=0.9, gamma=0.25))
    for t, tau in [(0.5, 0.5), (0.2, 0.7)]:
        want = 0.5 + (tau**0.75 - (tau - t) ** 0.75) / 0.75
        assert out.y(t, tau)[0] == pytest.approx(want, rel=1e-12)
    assert out.in_D_hat


def test_picard_map_checks_the_initial_bundle(frac_trig_sig):
    f = C.builtin_function("sin", m=2, d=2)
    with pytest.raises(InitialBundleMismatch):
        S.picard_map(frac_trig_sig, f, C.canonical_lift(frac_trig_sig, [0.1, 0.2]), (0.0, 0.25),
                     S.SolverOptions(alpha=0.8, gamma=0.25))


def test_picard_map_is_a_contraction_on_a_short_window(frac_trig_sig):
    f = C.builtin_function("sin", m=2, d=2)
    opts = S.SolverOptions(alpha=0.8, gamma=0.25)
    y0 = np.array([0.3, -0.4])
    a = S.seed_path(f, y0, 2)
    b = S.picard_map(frac_trig_sig, f, a, (0.0, 0.125), opts)
    c = S.picard_map(frac_trig_sig, f, b, (0.0, 0.125), opts)
    t = np.linspace(0.01, 0.125, 7)
    d1 = np.max(np.abs(b.y(t, t) - a.y(t, t)))
    d2 = np.max(np.abs(c.y(t, t) - b.y(t, t)))
    assert d2 < 0.5 * d1


def test_classical_constant_field_solution_is_exact(flat_linear_sig):
    f = C.builtin_function("constant", m=1, d=1)
    tr = S.solve(flat_linear_sig, f, [0.25], 1.0, S.SolverOptions(alpha=0.9, gamma=0.0, output_level=3))
    np.testing.assert_allclose(tr.diagonal[:, 0], 0.25 + tr.times, atol=1e-13)
    assert all(q < 1 for q in tr.q_hats)


def test_linear_field_matches_the_exponential(flat_linear_sig):
    f = C.builtin_function("linear", m=1, d=1)
    tr = S.solve(flat_linear_sig, f, [1.0], 0.5, S.SolverOptions(alpha=0.9, gamma=0.0, output_level=3))
    np.testing.assert_allclose(tr.diagonal[:, 0], np.exp(tr.times), rtol=1e-9)
    # y^tau_t = 1 + int_0^t y_r dr does not depend on tau when k = 1
    np.testing.assert_allclose(tr.value(0.25, 0.5), tr.value(0.25, 0.25), rtol=1e-13)


def test_fractional_slices_and_trace_export(tmp_path):
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), driver.linear(1.0))
    f = C.builtin_function("constant", m=1, d=1)
    # alpha close to 1/4 + gamma keeps alpha - beta small, so the measured M admits long windows
    tr = S.solve(sig, f, [0.0], 0.5, S.SolverOptions(alpha=0.55, gamma=0.25, output_level=2), taus=(0.5,))
    sl = tr.slices[0.5]
    want = (0.5**0.75 - (0.5 - tr.times) ** 0.75) / 0.75
    np.testing.assert_allclose(sl[:, 0], want, atol=1e-10)
    lines = tr.to_csv().splitlines()
    assert lines[0].startswith("# volterra-rough") and lines[1] == "t,component,value"
    assert len(lines) == 2 + tr.times.size
    diag = json.loads(tr.to_json())
    assert diag["steps"] and {"t0", "t1", "q_hat", "M", "ball_step"} <= set(diag["steps"][0])


def test_trace_as_controlled_carries_the_solution_bundle(flat_linear_sig):
    f = C.builtin_function("sin", m=1, d=1)
    tr = S.solve(flat_linear_sig, f, [0.5], 0.25, S.SolverOptions(alpha=0.9, gamma=0.0, output_level=2))
    y = S.trace_as_controlled(tr, f, 1)
    assert y.in_D_hat
    np.testing.assert_allclose(y.y_dot(0.2, 0.25, 0.25), f(tr.diagonal_at(0.2)), rtol=1e-14)


def test_solve_validates_inputs(flat_linear_sig):
    f = C.builtin_function("sin", m=1, d=1)
    opts = S.SolverOptions(alpha=0.9, gamma=0.0)
    with pytest.raises(ValidationError):
        S.solve(flat_linear_sig, f, [0.0, 1.0], 1.0, opts)
    with pytest.raises(ValidationError):
        S.solve(flat_linear_sig, f, [0.0], 2.0, opts)
    with pytest.raises(ValidationError):
        S.solve(flat_linear_sig, C.builtin_function("sin", m=1, d=2), [0.0], 1.0, opts)
    with pytest.raises(ValidationError):
        S.solve(flat_linear_sig, f, [0.0], 1.0)


def test_breakpoints_force_window_edges(flat_linear_sig):
    f = C.builtin_function("linear", m=1, d=1)
    tr = S.solve(flat_linear_sig, f, [1.0], 0.5, S.SolverOptions(alpha=0.9, gamma=0.0, output_level=2,
                                                                  breakpoints=(0.25,)))
    assert any(abs(s.t1 - 0.25) < 1e-15 for s in tr.steps)
