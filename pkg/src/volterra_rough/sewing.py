"""Sewing engines: dyadic Riemann sums of Volterra integrands.

``sew_single`` handles integrands ``xi(s, t, tau)`` with one singular
weight at ``tau``; ``sew_double`` handles ``xi(v, s, t, tau)`` which may
in addition blow up at the base point ``v``.  Both refine dyadically until
successive sums differ by less than ``tol`` and report the per-level
differences together with a fitted convergence rate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ExponentError, NonCauchy, Overflow, SingularBase

log = logging.getLogger(__name__)

DEFAULT_MAX_LEVEL = 14
DEFAULT_REL_TOL = 1e-9
_TINY = 1e-300


@dataclass(frozen=True)
class SewingExponents:
    """Regularity exponents of an abstract integrand.

    ``beta`` is the order of the defect, ``kappa`` the strength of the
    singularity at ``tau`` and ``theta`` the strength at the base point
    (0 for single-singularity integrands).  ``alpha``/``gamma`` record the
    regularity pair of the output and are informational.
    """

    beta: float
    kappa: float
    theta: float = 0.0
    alpha: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if not self.beta > 1.0:
            raise ExponentError(f"sewing needs beta > 1, got {self.beta}", "sewing.beta>1")
        if not (0.0 <= self.kappa < 1.0):
            raise ExponentError(f"kappa must lie in [0, 1), got {self.kappa}", "sewing.kappa_range")
        if self.theta < 0.0:
            raise ExponentError("theta must be non-negative", "sewing.theta>=0")
        # theta >= 1 is rejected by sew_double, where the base point is known
        if self.theta < 1.0 and not self.kappa + self.theta < 1.0:
            raise ExponentError("sewing needs kappa + theta < 1", "sewing.kappa+theta<1")
        if not self.beta - self.kappa - self.theta > 0.0:
            raise ExponentError("sewing needs beta - kappa - theta > 0", "sewing.beta-kappa-theta>0")

    @property
    def expected_rate(self) -> float:
        """Rate of the successive differences, ``2**(-n (beta - 1))``."""
        return self.beta - 1.0


@dataclass
class SewingDiagnostics:
    levels: list = field(default_factory=list)
    level_diffs: list = field(default_factory=list)
    fitted_slope: float | None = None
    converged: bool = False
    levels_used: int = 0

    def to_dict(self) -> dict:
        return {
            "levels": [int(v) for v in self.levels],
            "diffs": [float(v) for v in self.level_diffs],
            "slope": None if self.fitted_slope is None else float(self.fitted_slope),
            "converged": bool(self.converged),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def slope_between(self, lo: int, hi: int) -> float | None:
        """Fitted rate using only levels ``lo..hi`` inclusive."""
        pairs = [(n, d) for n, d in zip(self.levels, self.level_diffs) if lo <= n <= hi]
        return fit_rate([p[0] for p in pairs], [p[1] for p in pairs])


def fit_rate(levels: Sequence[int], diffs: Sequence[float]) -> float | None:
    """Minus the least-squares slope of ``log2(diff)`` against level.

    Zero differences are dropped; at least three points are required.
    """
    pts = [(n, d) for n, d in zip(levels, diffs) if d > 0 and np.isfinite(d)]
    if len(pts) < 3:
        return None
    n = np.array([p[0] for p in pts], dtype=float)
    y = np.log2([p[1] for p in pts])
    slope = np.polyfit(n, y, 1)[0]
    return float(-slope)


def pairwise_sum(values: np.ndarray) -> np.ndarray:
    """Sum along axis 0 by a balanced binary tree (fixed order)."""
    arr = np.asarray(values, dtype=float)
    if arr.shape[0] == 0:
        return np.zeros(arr.shape[1:])
    while arr.shape[0] > 1:
        if arr.shape[0] % 2:
            arr = np.concatenate([arr, np.zeros((1,) + arr.shape[1:])], axis=0)
        arr = arr[0::2] + arr[1::2]
    return arr[0]


def dyadic_cells(a: float, b: float, level: int):
    """Left and right endpoints of the ``2**level`` dyadic cells of ``[a, b]``."""
    n = 2**level
    k = np.arange(n + 1, dtype=float)
    pts = a + k * ((b - a) / n)
    pts[-1] = b
    return pts[:-1], pts[1:]


def riemann_sum(cell_fn: Callable, a: float, b: float, level: int, vectorized: bool = False):
    """``sum over dyadic cells [u, v] of cell_fn(u, v)`` with pairwise summation."""
    u, v = dyadic_cells(a, b, level)
    if vectorized:
        vals = np.asarray(cell_fn(u, v), dtype=float)
    else:
        vals = np.stack([np.asarray(cell_fn(float(ui), float(vi)), dtype=float) for ui, vi in zip(u, v)])
    return pairwise_sum(vals)


def _sew(cell_fn, a, b, tol, max_level, min_level, vectorized, what):
    diag = SewingDiagnostics()
    prev = riemann_sum(cell_fn, a, b, 0, vectorized)
    if not np.all(np.isfinite(prev)):
        raise Overflow(f"{what}: non-finite integrand on [{a}, {b}]", "sewing.finite")
    if tol is None:
        tol = DEFAULT_REL_TOL * max(float(np.max(np.abs(prev))) if np.size(prev) else 0.0, _TINY)
    growth = 0
    for level in range(1, max_level + 1):
        cur = riemann_sum(cell_fn, a, b, level, vectorized)
        if not np.all(np.isfinite(cur)):
            raise Overflow(f"{what}: non-finite Riemann sum at level {level}; check kappa", "sewing.finite")
        diff = float(np.max(np.abs(cur - prev))) if np.size(cur) else 0.0
        if diag.level_diffs and diff >= diag.level_diffs[-1] and diff > tol:
            growth += 1
        else:
            growth = 0
        diag.levels.append(level)
        diag.level_diffs.append(diff)
        prev = cur
        if growth >= 4:
            diag.levels_used = level
            diag.fitted_slope = fit_rate(diag.levels, diag.level_diffs)
            raise NonCauchy(f"{what}: Riemann sums stopped contracting at level {level}; "
                            "the defect order is probably <= 1", "sewing.cauchy")
        if diff < tol and level >= min_level:
            diag.converged = True
            break
    diag.levels_used = diag.levels[-1] if diag.levels else 0
    diag.fitted_slope = fit_rate(diag.levels, diag.level_diffs)
    log.debug("%s: %d levels, converged=%s, slope=%s", what, diag.levels_used, diag.converged, diag.fitted_slope)
    return prev, diag


def sew_single(xi: Callable, exps: SewingExponents, interval, tau: float, tol: float | None = None,
               max_level: int = DEFAULT_MAX_LEVEL, min_level: int = 1, vectorized: bool = False):
    """Sew ``xi(s, t, tau)`` over ``interval = [a, b]`` with ``b <= tau``.

    Returns ``(value, SewingDiagnostics)``.  ``tol`` defaults to ``1e-9``
    times the size of the level-0 sum.  With ``vectorized`` the integrand
    receives arrays of cell endpoints.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b or b > tau * (1 + 1e-14) + 1e-300:
        raise ExponentError(f"sew_single needs a < b <= tau, got [{a}, {b}], tau={tau}", "sewing.order")
    if not exps.theta == 0.0:
        raise ExponentError("sew_single expects theta = 0; use sew_double", "sewing.theta=0")
    return _sew(lambda u, v: xi(u, v, tau), a, b, tol, max_level, min_level, vectorized, "sew_single")


def sew_double(xi: Callable, exps: SewingExponents, v: float, interval, tau: float, tol: float | None = None,
               max_level: int = DEFAULT_MAX_LEVEL, min_level: int = 1, vectorized: bool = False):
    """Sew ``xi(v, s, t, tau)`` over ``interval = [s, t]`` with base point ``v <= s``."""
    s, t = float(interval[0]), float(interval[1])
    if not (v <= s < t <= tau * (1 + 1e-14) + 1e-300):
        raise ExponentError(f"sew_double needs v <= s < t <= tau, got v={v}, [{s}, {t}], tau={tau}", "sewing.order")
    if not exps.theta > 0.0:
        raise ExponentError("sew_double expects theta > 0", "sewing.theta>0")
    if v == s and exps.theta >= 1.0:
        raise SingularBase("base point coincides with s and theta >= 1", "sewing.singular_base")
    if not exps.kappa + exps.theta < 1.0:
        raise ExponentError("sewing needs kappa + theta < 1", "sewing.kappa+theta<1")
    return _sew(lambda u, w: xi(v, u, w, tau), s, t, tol, max_level, min_level, vectorized, "sew_double")


def probe_integrand(beta: float, kappa: float, theta: float = 0.0, scale: float = 1.0):
    """Integrand with an additive part plus a perturbation whose defect has order ``beta``.

    The additive part is ``int_s^t (tau - r)^(-kappa) dr``.  The
    perturbation ``scale (t - s)^beta (tau - s)^(-kappa)`` (times
    ``(t - v)^(-theta)`` in the double form) makes the Riemann sums move by
    ``~ 2**(-n (beta - 1))`` per level.  Returns ``xi(s, t, tau)`` when
    ``theta == 0`` and ``xi(v, s, t, tau)`` otherwise; both accept arrays.
    """
    one = 1.0 - kappa

    def base(s, t, tau):
        return ((tau - s) ** one - np.maximum(tau - t, 0.0) ** one) / one

    def bump(s, t, tau):
        return scale * (t - s) ** beta * (tau - s) ** (-kappa)

    if theta == 0.0:
        def xi(s, t, tau):
            s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
            return base(s, t, tau) + bump(s, t, tau)
        return xi

    def xi2(v, s, t, tau):
        s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
        return base(s, t, tau) + bump(s, t, tau) * (t - v) ** (-theta)
    return xi2
