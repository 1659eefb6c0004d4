"""Fixed-point solver for ``y^tau_t = y0 + int_0^t k(tau, r) dx_r f(y^r_r)``.

Each step works on a window ``[a, a + T]``.  The integrand is represented
by its values at the Gauss nodes of a :class:`~volterra_rough.integrator.ProductRule`
and the Picard map is iterated on the diagonal node values

    Y  <-  H(nodes) + A f(Y),

where ``A`` is the rule's diagonal weight matrix and ``H(tau)`` collects
``y0`` plus the contributions of all earlier windows.  The step length
comes from :func:`choose_step` fed with the signature norm measured on the
candidate window; a step whose iteration fails to contract doubles the
empirical constant and is retried.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._version import __version__
from .controlled import ControlledPath, SmoothFunction, compose
from .errors import ExponentError, InitialBundleMismatch, NoConvergence, StepUnderflow, ValidationError
from .grid import dyadic_partition
from .integrator import ProductRule, integrate_on_rule
from .norms import NormParams, volterra_norm
from .signature import TreeSymbol, VolterraSignature

log = logging.getLogger(__name__)

TRACE_HEADER = ("t", "component", "value")
UNDERFLOW_FRACTION = 1e-6
_NORM_SYMBOLS = ("dot", "cherry", "chain3", "vee")


@dataclass
class SolverOptions:
    """Exponents, tolerances and discretization knobs of :func:`solve`.

    ``grading`` applies to the first window only and defaults to
    ``1/(1 - gamma)``, which matches the ``t**(1-gamma)`` onset of the
    solution.  ``breakpoints`` force window boundaries (used by the
    patching probe); ``initial_perturbation`` offsets every initial guess
    by a constant (used by the uniqueness probe).
    """

    alpha: float
    gamma: float
    beta: Optional[float] = None
    max_picard: int = 50
    picard_tol: float = 1e-9
    step_shrink: float = 0.5
    cells: int = 4
    nodes_per_cell: int = 6
    grading: Optional[float] = None
    m_level: int = 2
    c_hat: float = 1.0
    max_step: Optional[float] = None
    breakpoints: Sequence[float] = ()
    initial_perturbation: float = 0.0
    output_level: int = 6
    max_retries: int = 40
    enforce_ball: bool = False

    def __post_init__(self):
        if self.beta is None:
            self.beta = self.alpha - (self.alpha - self.gamma - 0.25) / 2.0
        if not 0.0 <= self.gamma < 1.0:
            raise ExponentError(f"gamma must lie in [0, 1), got {self.gamma}", "solver.gamma_range")
        if not self.alpha - self.gamma > 0.25:
            raise ExponentError(f"alpha - gamma must exceed 1/4, got {self.alpha - self.gamma:.4g}",
                                "solver.alpha-gamma>1/4")
        if not self.beta < self.alpha:
            raise ExponentError(f"beta must be below alpha, got beta={self.beta}", "solver.beta<alpha")
        if not self.beta - self.gamma > 0.25:
            raise ExponentError(f"beta - gamma must exceed 1/4, got {self.beta - self.gamma:.4g}",
                                "solver.beta-gamma>1/4")
        if not 0.0 < self.step_shrink < 1.0:
            raise ValidationError("step_shrink must lie in (0, 1)", "solver.step_shrink")
        if self.max_picard < 1 or self.picard_tol <= 0.0:
            raise ValidationError("max_picard >= 1 and picard_tol > 0 required", "solver.picard")
        if self.cells < 1 or self.nodes_per_cell < 1:
            raise ValidationError("cells and nodes_per_cell must be positive", "solver.rule")

    @property
    def rho(self) -> float:
        return self.alpha - self.gamma

    def first_grading(self) -> float:
        return 1.0 / (1.0 - self.gamma) if self.grading is None else float(self.grading)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["breakpoints"] = [float(b) for b in self.breakpoints]
        return out


def _step_bounds(M, Q, e, C_hat):
    """``(ball, contraction)`` step limits; ``inf`` when ``M = 0``."""
    if M <= 0:
        return np.inf, np.inf
    ball = C_hat * M * (1.0 + M) ** 3 * (1.0 + Q**3)
    return float(ball ** (-1.0 / e)), float((2.0 * C_hat * M) ** (-1.0 / e))


def choose_step(M: float, Q: float, alpha: float, beta: float, C_hat: float, remaining: float,
                T: Optional[float] = None, ball: bool = True) -> float:
    """Largest window satisfying the invariant-ball and contraction conditions.

    Ball: ``C M (1+M)^3 (1+Q^3) T^(alpha-beta) <= 1``; contraction:
    ``C M T^(alpha-beta) <= 1/2``.  Both are solved for ``T`` and the result
    is capped by ``remaining``; ``ball=False`` drops the first condition.
    ``T`` (the full horizon, defaults to ``remaining``) sets the underflow
    threshold.
    """
    if M < 0 or Q < 0:
        raise ValidationError("M and Q must be non-negative", "step.nonnegative")
    if not alpha > beta:
        raise ExponentError("choose_step needs alpha > beta", "step.alpha>beta")
    if remaining <= 0:
        raise ValidationError("remaining horizon must be positive", "step.remaining")
    horizon = remaining if T is None else T
    b_step, c_step = _step_bounds(M, Q, alpha - beta, C_hat)
    step = min(remaining, c_step, b_step if ball else np.inf)
    if step < UNDERFLOW_FRACTION * horizon:
        raise StepUnderflow(f"selected step {step:.3g} below {UNDERFLOW_FRACTION:g} of the horizon", "step.underflow")
    return float(step)


def signature_bound(sig: VolterraSignature, a: float, b: float, opts: SolverOptions) -> float:
    """Sum of the ``(|sigma| rho + gamma, gamma)`` norms of the signature levels on ``[a, b]``."""
    grid = dyadic_partition((a, b), opts.m_level)
    total = 0.0
    for name in _NORM_SYMBOLS:
        sym = TreeSymbol.parse(name)
        params = NormParams(sym.vertices * opts.rho + opts.gamma, opts.gamma)
        rep = volterra_norm(lambda s, t, tau, n=name: sig.values(n, s, t, tau), params, grid, kind="delta")
        total += rep.total
    return float(total)


def initial_size(f: SmoothFunction, y: np.ndarray) -> float:
    """``|f(y)| + |f(y) f'(y)| + 1``, the radius term of the invariant ball."""
    fy = np.asarray(f(y), dtype=float)
    ffp = _cherry_slot(f, y)
    return float(np.max(np.abs(fy), initial=0.0) + np.max(np.abs(ffp), initial=0.0) + 1.0)


def _cherry_slot(f: SmoothFunction, y) -> np.ndarray:
    """``f'(y)[f(y)]`` with shape ``(..., m, d, d)``."""
    return np.einsum("...oaj,...jb->...oab", f.deriv(1, y), f(y))


# --------------------------------------------------------------------------
# bundle-level map
# --------------------------------------------------------------------------

def initial_bundle(f: SmoothFunction, y0) -> tuple:
    y0 = np.asarray(y0, dtype=float)
    return (y0, np.asarray(f(y0)), _cherry_slot(f, y0), np.zeros((f.m, f.d, f.d)))


def picard_map(sig: VolterraSignature, f: SmoothFunction, y: ControlledPath, interval, opts: SolverOptions,
               y0=None, history=None) -> ControlledPath:
    """One application of the fixed-point map on ``interval = [a, b]``.

    Composes ``f`` with ``y`` and integrates on a product rule over the
    interval.  The result carries ``(f(y), f'(y) f(y), 0)`` in its
    derivative slots.  When the interval starts at 0 the initial bundle of
    ``y`` must equal ``(y0, f(y0), f'(y0) f(y0), 0)``; ``y0`` defaults to
    ``y`` read at the origin.  ``history(tau)`` replaces the constant
    ``y0`` for windows that start later.
    """
    a, b = float(interval[0]), float(interval[1])
    if not y.in_D_hat:
        raise ValidationError("picard_map needs a D-hat bundle", "picard.D_hat")
    if a == 0.0:
        got = y.initial_bundle(0.0)
        start = got[0] if y0 is None else np.asarray(y0, dtype=float)
        want = initial_bundle(f, start)
        for name, g, w in zip(("y", "y_dot", "y_cherry", "y_pair"), got, want):
            g = np.broadcast_to(g, np.shape(w))
            if np.max(np.abs(g - w), initial=0.0) > 1e-9 * max(1.0, float(np.max(np.abs(w), initial=0.0))):
                raise InitialBundleMismatch(f"initial {name} slot does not match f at y0", f"picard.initial.{name}")
    else:
        start = np.asarray(y.y(a, a) if y0 is None else y0, dtype=float)
    if history is None:
        def history(tau, c=start):
            tau = np.asarray(tau, dtype=float)
            return np.broadcast_to(c, tau.shape + c.shape)
    grading = opts.first_grading() if a == 0.0 else 1.0
    rule = ProductRule(sig, a, b, opts.cells, opts.nodes_per_cell, grading)
    res = integrate_on_rule(rule, compose(f, y), history)
    return res.as_controlled


# --------------------------------------------------------------------------
# solution trace
# --------------------------------------------------------------------------

@dataclass
class StepRecord:
    t0: float
    t1: float
    iters: int
    q_hat: float
    M: float
    Q: float
    c_hat: float
    ball_step: float
    rule: ProductRule = field(repr=False)
    integrand: np.ndarray = field(repr=False)  # f(Y) at the rule nodes, (N, m, d)
    nodes_value: np.ndarray = field(repr=False)  # Y at the rule nodes, (N, m)

    def to_dict(self) -> dict:
        return {"t0": self.t0, "t1": self.t1, "iters": self.iters, "q_hat": self.q_hat,
                "M": self.M, "Q": self.Q, "c_hat": self.c_hat,
                "ball_step": self.ball_step if np.isfinite(self.ball_step) else None}


@dataclass
class SolutionTrace:
    times: np.ndarray
    diagonal: np.ndarray
    y0: np.ndarray
    steps: list
    slices: dict = field(default_factory=dict)
    options: Optional[SolverOptions] = None

    # evaluation of the piecewise representation -------------------------
    def value(self, t, tau) -> np.ndarray:
        """``y^tau_t`` for ``t <= tau`` (arrays broadcast); shape ``(..., m)``."""
        t, tau = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau, dtype=float))
        out = np.broadcast_to(self.y0, t.shape + self.y0.shape).copy()
        for st in self.steps:
            live = t > st.t0
            if not np.any(live):
                break
            upto = np.clip(t, st.t0, st.t1)
            w = st.rule.integrate(st.integrand, upto, np.maximum(tau, upto))
            out += np.where(live[..., None], w, 0.0)
        return out

    def diagonal_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.value(t, t)

    @property
    def q_hats(self) -> list:
        return [s.q_hat for s in self.steps]

    # export ---------------------------------------------------------------
    def csv_rows(self):
        for t, row in zip(self.times, self.diagonal):
            for c, v in enumerate(np.atleast_1d(row)):
                yield (repr(float(t)), c, repr(float(v)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# volterra-rough {__version__} solution trace\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TRACE_HEADER)
        wr.writerows(self.csv_rows())
        return buf.getvalue()

    def diagnostics_dict(self) -> dict:
        return {"version": __version__, "steps": [s.to_dict() for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.diagnostics_dict(), indent=2)


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------

def _picard_nodes(f, H, A, Y, opts):
    """Iterate ``Y <- H + A f(Y)``; returns ``(Y, iters, q_hat, converged)``."""
    diffs = []
    for it in range(1, opts.max_picard + 1):
        Fy = f(Y)
        Y_new = H + np.einsum("ijd,jmd->im", A, Fy)
        if not np.all(np.isfinite(Y_new)):
            return Y_new, it, np.inf, False
        diff = float(np.max(np.abs(Y_new - Y), initial=0.0))
        diffs.append(diff)
        Y = Y_new
        if diff < opts.picard_tol:
            ratios = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] >= opts.picard_tol]
            return Y, it, float(max(ratios, default=0.0)), True
    ratios = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] > 0]
    return Y, opts.max_picard, float(max(ratios, default=np.inf)), False


def _history(steps, y0, tau):
    tau = np.asarray(tau, dtype=float)
    out = np.broadcast_to(y0, tau.shape + y0.shape).copy()
    for st in steps:
        out += st.rule.integrate(st.integrand, np.full_like(tau, st.t1), tau)
    return out


def solve(sig: VolterraSignature, f: SmoothFunction, y0, T: Optional[float] = None,
          opts: Optional[SolverOptions] = None, taus: Sequence[float] = ()) -> SolutionTrace:
    """Solve on ``[0, T]`` by patching fixed-point windows.

    Window lengths start from the remaining horizon (capped by
    ``opts.max_step``, the next breakpoint and twice the previous window)
    and are halved until :func:`choose_step`, fed with the signature norm
    of the candidate window, admits them.  ``taus`` requests slices
    ``y^tau_t`` on the output grid.
    """
    if opts is None:
        raise ValidationError("solve needs SolverOptions (alpha, gamma)", "solver.options")
    T = sig.T if T is None else float(T)
    if not 0.0 < T <= sig.T * (1 + 1e-12):
        raise ValidationError(f"horizon {T} outside (0, {sig.T}]", "solver.horizon")
    if f.d != sig.d:
        raise ValidationError(f"f expects d={f.d}, driver has d={sig.d}", "solver.shape")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.shape != (f.m,):
        raise ValidationError(f"y0 must have shape ({f.m},)", "solver.y0")
    try:
        f.order  # noqa: B018  (probe that derivative tables exist)
    except AttributeError as exc:
        raise ValidationError("f must be a SmoothFunction", "solver.f") from exc

    breaks = sorted(float(b) for b in opts.breakpoints if 0.0 < b < T)
    c_hat = float(opts.c_hat)
    steps: list = []
    a, prev = 0.0, None
    while a < T * (1 - 1e-14):
        remaining = T - a
        cap = remaining
        if opts.max_step is not None:
            cap = min(cap, float(opts.max_step))
        nxt = [b for b in breaks if b > a * (1 + 1e-14) + 1e-300]
        if nxt:
            cap = min(cap, nxt[0] - a)
        if prev is not None:
            cap = min(cap, 2.0 * prev)
        y_a = _history(steps, y0, np.array(a))
        Q = initial_size(f, y_a)
        record = None
        for _attempt in range(opts.max_retries):
            L = cap
            while True:
                M = signature_bound(sig, a, a + L, opts)
                b_step, c_step = _step_bounds(M, Q, opts.alpha - opts.beta, c_hat)
                admissible = min(c_step, b_step if opts.enforce_ball else np.inf)
                if admissible >= L * (1 - 1e-12):
                    break
                L = min(L * opts.step_shrink, max(admissible, L * opts.step_shrink**8))
                if L < UNDERFLOW_FRACTION * T:
                    raise NoConvergence(f"no admissible step at t={a:.6g}: step fell below "
                                        f"{UNDERFLOW_FRACTION:g} of the horizon", "solver.underflow")
            b = T if abs(a + L - T) < 1e-14 * T else a + L
            grading = opts.first_grading() if a == 0.0 else 1.0
            rule = ProductRule(sig, a, b, opts.cells, opts.nodes_per_cell, grading)
            H = _history(steps, y0, rule.nodes)
            Y = H + opts.initial_perturbation
            Y, iters, q_hat, ok = _picard_nodes(f, H, rule.diagonal_matrix, Y, opts)
            if ok and q_hat < 1.0:
                record = StepRecord(a, b, iters, q_hat, M, Q, c_hat, min(b_step, remaining), rule,
                                    np.asarray(f(Y), dtype=float), Y)
                break
            log.info("window [%.6g, %.6g] did not contract (q_hat=%s); doubling C_hat", a, b, q_hat)
            c_hat *= 2.0
            cap = L
        if record is None:
            raise NoConvergence(f"Picard iteration failed at t={a:.6g} after {opts.max_retries} retries",
                                "solver.picard")
        log.debug("step [%.6g, %.6g]: iters=%d q_hat=%.3g M=%.3g", record.t0, record.t1, record.iters,
                  record.q_hat, record.M)
        steps.append(record)
        prev = record.t1 - record.t0
        a = record.t1

    out_grid = dyadic_partition((0.0, T), opts.output_level)
    times = np.asarray(out_grid.points, dtype=float)
    trace = SolutionTrace(times, np.zeros((times.size, f.m)), y0, steps, options=opts)
    trace.diagonal = trace.diagonal_at(times)
    trace.diagonal[0] = y0
    for tau in taus:
        sel = times[times <= tau + 1e-15]
        trace.slices[float(tau)] = trace.value(sel, np.full_like(sel, tau))
    return trace


def trace_as_controlled(trace: SolutionTrace, f: SmoothFunction, d: int) -> ControlledPath:
    """View a solution as a D-hat bundle ``(y, f(y), f'(y) f(y), 0)``."""

    def y(t, tau):
        return trace.value(t, tau)

    def y_dot(t, tau, p):
        t, _, _ = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau), np.asarray(p))
        return np.asarray(f(trace.diagonal_at(t)))

    def y_cherry(t, tau, q, p):
        t, _, _, _ = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau), np.asarray(q), np.asarray(p))
        return _cherry_slot(f, trace.diagonal_at(t))

    def y_pair(t, tau, q, p):
        lead = np.broadcast(np.asarray(t), np.asarray(tau), np.asarray(q), np.asarray(p)).shape
        return np.zeros(lead + (f.m, d, d))

    return ControlledPath(y, y_dot, y_cherry, y_pair, (f.m,), d, in_D_hat=True, label="solution")


def seed_path(f: SmoothFunction, y0, d: int) -> ControlledPath:
    """Constant path ``y0`` carrying the initial bundle ``(f(y0), f'(y0) f(y0), 0)``."""
    y0, fy, ffp, zero = initial_bundle(f, np.atleast_1d(np.asarray(y0, dtype=float)))

    def lead(*args):
        return np.broadcast(*[np.asarray(a) for a in args]).shape

    return ControlledPath(lambda t, tau: np.broadcast_to(y0, lead(t, tau) + y0.shape).copy(),
                          lambda t, tau, p: np.broadcast_to(fy, lead(t, tau, p) + fy.shape).copy(),
                          lambda t, tau, q, p: np.broadcast_to(ffp, lead(t, tau, q, p) + ffp.shape).copy(),
                          lambda t, tau, q, p: np.broadcast_to(zero, lead(t, tau, q, p) + zero.shape).copy(),
                          (f.m,), d, in_D_hat=True, label="seed")
