"""Acceptance criteria 1-10.

Each test records one ``criterion N: PASS/FAIL`` line; the lines are echoed
in the terminal summary by ``conftest.py``.  Oracles are independent of the
library: nested Gauss-Legendre for iterated integrals, midpoint
Riemann-Stieltjes sums, closed forms and a classical RK4 integrator.
"""

import time

import numpy as np
import pytest

from volterra_rough import controlled as C
from volterra_rough import driver, integrator, kernel
from volterra_rough.cli import main as cli_main
from volterra_rough.grid import dyadic_partition
from volterra_rough.norms import NormParams, embedding_audit, inclusion_chain_audit, volterra_norm
from volterra_rough.sewing import SewingExponents, fit_rate, probe_integrand, sew_double, sew_single
from volterra_rough.signature import VolterraSignature, chen_audit
from volterra_rough.solver import SolverOptions, solve

RESULTS: dict = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def trig_driver():
    return driver.trig(1.0, [1.0, 0.0], [0.0, 1.0], [1.0, 2.0])


# --------------------------------------------------------------------- 1
def test_criterion_1_chen_relations():
    g = dyadic_partition((0, 1), 3)
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), trig_driver(), grid=g)
    t0 = time.perf_counter()
    rows = chen_audit(sig, g, ("cherry", "chain3", "vee"))
    elapsed = time.perf_counter() - t0
    worst = {s: max(r[-1] for r in rows if r[0] == s) for s in ("cherry", "chain3", "vee")}
    ok = len(rows) > 0 and max(worst.values()) <= 1e-6 and elapsed <= 60.0
    record(1, ok, f"{len(rows)} tuples, max residuals {worst}, {elapsed:.1f}s")


# --------------------------------------------------------------------- 2
XG, WG = np.polynomial.legendre.leggauss(64)


def _gl(fn, a, b):
    r = 0.5 * (b - a) * XG + 0.5 * (a + b)
    return np.tensordot(0.5 * (b - a) * WG, np.asarray(fn(r)), axes=(0, 0))


def _iterated(x, s, t):
    inc = lambda r: x.value(r) - x.value(s)
    dx = x.derivative
    lvl2_at = lambda r1: np.stack([_gl(lambda u: np.einsum("na,nb->nab", dx(u), inc(u)), s, v) for v in r1])
    return {
        "dot": inc(np.array(t)),
        "cherry": _gl(lambda r: np.einsum("na,nb->nab", dx(r), inc(r)), s, t),
        "chain3": _gl(lambda r: np.einsum("na,nbc->nabc", dx(r), lvl2_at(r)), s, t),
        "vee": _gl(lambda r: np.einsum("na,nb,nc->nabc", dx(r), inc(r), inc(r)), s, t),
    }


def test_criterion_2_classical_reduction():
    x = trig_driver()
    sig = VolterraSignature(kernel.make_kernel("constant", 0.0), x)
    rel = 0.0
    for s, t in [(0.0, 1.0), (0.125, 0.875), (0.3, 0.4)]:
        want = _iterated(x, s, t)
        for sigma, w in want.items():
            got = sig.value(sigma, s, t, 1.0)
            rel = max(rel, float(np.max(np.abs(got - w)) / np.max(np.abs(w))))
    x1 = driver.trig(1.0, [1.0], [0.0], [3.0], [0.5])
    sig1 = VolterraSignature(kernel.make_kernel("constant", 0.0), x1)
    phi = C.compose(C.builtin_function("sin", m=1, d=1), C.canonical_lift(sig1, [0.0]))
    val, _ = integrator.rough_integral(sig1, phi, 0.0, 1.0, 1.0, max_level=8)
    r = np.linspace(0.0, 1.0, 400_001)
    mid = 0.5 * (r[1:] + r[:-1])
    oracle = float(np.sum(np.sin(x1.value(mid)[:, 0]) * np.diff(x1.value(r)[:, 0])))
    err = abs(float(val[0]) - oracle)
    record(2, rel <= 1e-9 and err <= 1e-6, f"max relative level 1-3 error {rel:.2e}, integral error {err:.2e}")


# --------------------------------------------------------------------- 3
def test_criterion_3_sewing_rate():
    rho, gamma = 0.3, 0.25
    beta = 4 * rho + gamma
    _, single = sew_single(probe_integrand(beta, gamma), SewingExponents(beta, gamma), (0.0, 1.0), 1.0, tol=0.0,
                           max_level=12, vectorized=True)
    _, double = sew_double(probe_integrand(beta, gamma, 0.3), SewingExponents(beta, gamma, 0.3), 0.0, (0.1, 0.6),
                           0.8, tol=0.0, max_level=12, vectorized=True)
    slopes = (single.slope_between(4, 12), double.slope_between(4, 12))
    record(3, min(slopes) >= beta - 1 - 0.1, f"slopes single {slopes[0]:.3f}, double {slopes[1]:.3f}, "
                                             f"target {beta - 1 - 0.1:.2f}")


# --------------------------------------------------------------------- 4
def _solve_a(**kw):
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), driver.linear(1.0))
    f = C.builtin_function("constant", m=1, d=1)
    return solve(sig, f, [0.0], 1.0, SolverOptions(alpha=0.55, gamma=0.25, **kw))


def _solve_flat(name, y0, **kw):
    sig = VolterraSignature(kernel.make_kernel("constant", 0.0), driver.linear(1.0))
    return solve(sig, C.builtin_function(name, m=1, d=1), [y0], 1.0, SolverOptions(alpha=0.9, gamma=0.0, **kw))


def _rk4(fn, y0, n):
    h, y = 1.0 / n, y0
    out = [y]
    for _ in range(n):
        k1 = fn(y)
        k2 = fn(y + 0.5 * h * k1)
        k3 = fn(y + 0.5 * h * k2)
        k4 = fn(y + h * k3)
        y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        out.append(y)
    return np.array(out)


@pytest.fixture(scope="module")
def closed_form_solves():
    return {"a": _solve_a(), "b": _solve_flat("linear", 1.0), "c": _solve_flat("sin", 1.0)}


def test_criterion_4_closed_form_solves(closed_form_solves):
    ta, tb, tc = (closed_form_solves[k] for k in "abc")
    dense = np.linspace(0.0, 1.0, 257)
    err_a = max(float(np.max(np.abs(ta.diagonal[:, 0] - ta.times**0.75 / 0.75))),
                float(np.max(np.abs(ta.diagonal_at(dense)[:, 0] - dense**0.75 / 0.75))))
    err_b = float(np.max(np.abs(tb.diagonal[:, 0] - np.exp(tb.times))))
    n = 10240  # multiple of the 64 output cells, so every output time is an RK4 node
    ref = _rk4(np.sin, 1.0, n)[:: n // (tc.times.size - 1)]
    err_c = float(np.max(np.abs(tc.diagonal[:, 0] - ref)))
    ok = err_a <= 1e-6 and err_b <= 1e-4 and err_c <= 1e-5
    record(4, ok, f"sup errors (a) {err_a:.2e}, (b) {err_b:.2e}, (c) {err_c:.2e}")


# --------------------------------------------------------------------- 5
def test_criterion_5_remainder_orders():
    rho, gamma = 0.3, 0.25
    sig = VolterraSignature(kernel.make_kernel("fractional", gamma), trig_driver())
    phi = C.compose(C.builtin_function("sin", m=2, d=2), C.canonical_lift(sig, [0.1, -0.2]))
    w = integrator.integrate_to_controlled(sig, phi, dyadic_partition((0, 1), 2), alpha=rho + gamma,
                                           sew=False).as_controlled
    s, levels = 0.25, list(range(2, 8))
    gap, ry, rdot = [], [], []
    for lv in levels:
        t = s + 2.0**-lv
        gap.append(np.max(np.abs(integrator.stieltjes_integral(sig, phi, s, t, t) - integrator.germ(sig, phi, s, t, t))))
        ry.append(np.max(np.abs(C.remainder_y(sig, w, s, t, t))))
        rdot.append(np.max(np.abs(C.remainder_dot(sig, w, s, t, t, t))))
    got = (fit_rate(levels, gap), fit_rate(levels, ry), fit_rate(levels, rdot))
    want = (4 * rho + gamma - 0.15, 3 * rho + 3 * gamma - 0.15, 2 * rho + 2 * gamma - 0.15)
    ok = all(g >= w_ for g, w_ in zip(got, want))
    record(5, ok, "slopes |w-Xi| {:.2f}>={:.2f}, R^y {:.2f}>={:.2f}, R^dot {:.2f}>={:.2f}".format(
        got[0], want[0], got[1], want[1], got[2], want[2]))


# --------------------------------------------------------------------- 6
def test_criterion_6_norm_laws():
    g = dyadic_partition((0, 1), 3)
    smooth = lambda t, tau: np.sin(3 * np.asarray(t)) * np.cos(np.asarray(tau))
    emb = embedding_audit(smooth, NormParams(0.8, 0.25), NormParams(0.6, 0.25), g, chain=False)
    chain = inclusion_chain_audit(g, 0.3, 0.25)
    chain_viol = sum(v["forward_violations"] for v in chain.values())
    y = C.tau_constant_lift(lambda t: np.stack([np.sin(t), np.cos(2 * t)], -1), (2,), 2)
    mixed = volterra_norm(y.y, NormParams(0.55, 0.25), g).norm_12
    ok = emb.violations == 0 and emb.holds and chain_viol == 0 and mixed == 0.0
    record(6, ok, f"embedding violations {emb.violations}/{emb.n_checked}, inclusion-chain violations "
                  f"{chain_viol}, tau-constant (1,2)-norm {mixed}")


# --------------------------------------------------------------------- 7
def test_criterion_7_telescoping():
    sig = VolterraSignature(kernel.make_kernel("fractional", 0.25), trig_driver())
    c = np.array([1.5, -2.0])

    def const(*r):
        return np.broadcast_to(c, np.broadcast(*[np.asarray(v) for v in r]).shape + (2,))

    s, t, tau = 0.25, 0.75, 1.0
    worst = 0.0
    for level in range(0, 6):
        for got, sigma in [(C.conv1(sig, 0.0, s, t, tau, const, level=level), "dot"),
                           (C.conv2(sig, s, t, tau, const, level=level), "cherry"),
                           (C.conv3(sig, "chain3", s, t, tau, const, level=level), "chain3"),
                           (C.conv3(sig, "vee", s, t, tau, const, level=level), "vee")]:
            want = np.multiply.outer(sig.value(sigma, s, t, tau), c)
            worst = max(worst, float(np.max(np.abs(got - want)) / np.max(np.abs(want))))
    record(7, worst <= 1e-12, f"max relative deviation over levels 0-5: {worst:.2e}")


# --------------------------------------------------------------------- 8
def test_criterion_8_fixed_point(closed_form_solves):
    tol = 5 * 1e-9
    lines, ok = [], True
    probes = {"a": lambda **kw: _solve_a(**kw), "b": lambda **kw: _solve_flat("linear", 1.0, **kw),
              "c": lambda **kw: _solve_flat("sin", 1.0, **kw)}
    for key, run in probes.items():
        base = closed_form_solves[key]
        q = max(base.q_hats)
        uniq = float(np.max(np.abs(run(initial_perturbation=0.05).diagonal - base.diagonal)))
        patch = float(np.max(np.abs(run(breakpoints=(0.5,)).diagonal - base.diagonal)))
        ok &= q < 1.0 and uniq <= tol and patch <= tol
        lines.append(f"({key}) max q_hat {q:.3f}, uniqueness {uniq:.1e}, patching {patch:.1e}")
    record(8, ok, "; ".join(lines))


# --------------------------------------------------------------------- 9
def test_criterion_9_cancellation_identity():
    rng = np.random.default_rng(20261015)
    k = kernel.make_kernel("fractional", 0.25)
    worst = 0.0
    for _ in range(100):
        d, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        x = driver.trig(1.0, rng.normal(size=d), rng.normal(size=d), rng.uniform(0.5, 3.0, size=d),
                        rng.normal(size=d))
        sig = VolterraSignature(k, x)
        f = C.ridge_function("sin", rng.normal(size=(m, d)), rng.normal(size=(m, d, m)))
        y0, B0, B1 = rng.normal(size=m), rng.normal(size=(m, d)), rng.normal(size=(m, d))

        def y(t, tau, y0=y0):
            return np.broadcast_to(y0, np.broadcast(t, tau).shape + (m,)).copy()

        def y_dot(t, tau, p, B0=B0, B1=B1):
            p = np.asarray(p, dtype=float)[..., None, None] + 0 * np.asarray(t, dtype=float)[..., None, None]
            return B0 + p * B1

        zero = lambda *a, m=m, d=d: np.zeros(np.broadcast(*[np.asarray(v) for v in a]).shape + (m, d, d))
        bundle = C.ControlledPath(y, y_dot, zero, zero, (m,), d, in_D_hat=True)
        s, t = sorted(rng.uniform(0.0, 0.8, size=2))
        tau = rng.uniform(t, 1.0)
        worst = max(worst, C.cancellation_check(bundle, f, float(s), float(t) + 1e-3, float(tau) + 1e-3, sig))
    record(9, worst <= 1e-10, f"max residual over 100 datasets {worst:.2e}")


# --------------------------------------------------------------------- 10
def test_criterion_10_determinism(tmp_path):
    bodies = []
    for n in (1, 4, 4):
        out = tmp_path / f"run{len(bodies)}"
        code = cli_main(["solve", "--out", str(out), "--threads", str(n), "--set", "exponents.alpha=0.55",
                         "--set", "function.name=\"sin\"", "--set", "y0=[0.5]", "--set", "solve.T=0.5"])
        assert code == 0
        bodies.append((out / "solution.csv").read_text().splitlines()[1:])
    same = all(b == bodies[0] for b in bodies)
    record(10, same, f"{len(bodies)} runs with --threads 1,4,4, {len(bodies[0])} CSV lines, identical={same}")
