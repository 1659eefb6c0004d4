"""Product quadrature for integrals against a singular Volterra kernel.

For ``I = int_s^t (tau - r)**(-p) g(r) dr`` with ``tau >= t`` the
substitution ``r = tau - (tau - s) * xi**q`` with ``q = 1 / (1 - p)``
cancels the algebraic factor exactly, leaving a smooth integrand in ``xi``.
The remaining integral over ``xi`` is done with a tanh-sinh rule, whose
double-exponential endpoint clustering also absorbs the ``(r - s)**c``
endpoint behaviour of nested inner integrals.  All functions broadcast over
arrays of ``(s, t, tau)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

from typing import Optional

import numpy as np

from .driver import DrivingPath
from .kernel import Kernel


@dataclass(frozen=True)
class QuadratureSpec:
    """Step sizes of the tanh-sinh rule.

    ``h`` is used for outermost integrals and ``h_inner`` for the nested
    inner integrals of higher signature levels; ``h_deep``, when set,
    replaces ``h_inner`` from nesting depth 2 on.  ``umax`` truncates the
    rule; at 3.6 the dropped tail is below double precision.
    """

    h: float = 1.0 / 8.0
    h_inner: float = 1.0 / 6.0
    umax: float = 3.6
    h_deep: Optional[float] = None

    def step(self, depth: int) -> float:
        if depth == 0:
            return self.h
        if depth >= 2 and self.h_deep is not None:
            return self.h_deep
        return self.h_inner

    def to_dict(self) -> dict:
        out = {"h": self.h, "h_inner": self.h_inner, "umax": self.umax}
        if self.h_deep is not None:
            out["h_deep"] = self.h_deep
        return out


@functools.lru_cache(maxsize=32)
def tanh_sinh_rule(h: float, umax: float = 3.6):
    """Nodes ``x``, complements ``1 - x`` and weights of tanh-sinh on [0, 1].

    Complements are returned separately so that nodes close to 1 keep full
    relative precision in ``1 - x``.
    """
    k = int(np.ceil(umax / h))
    u = np.arange(-k, k + 1) * h
    v = 0.5 * np.pi * np.sinh(u)
    x = 1.0 / (1.0 + np.exp(-2.0 * v))
    xc = 1.0 / (1.0 + np.exp(2.0 * v))
    w = h * np.pi * np.cosh(u) * x * xc
    for arr in (x, xc, w):
        arr.setflags(write=False)
    return x, xc, w


def singular_rule(s, t, tau, power: float, h: float, umax: float = 3.6):
    """Nodes and weights for ``int_s^t (tau - r)**(-power) g(r) dr``.

    Returns ``(r, W)`` with shape ``broadcast(s, t, tau).shape + (n,)`` such
    that ``sum(W * g(r))`` approximates the integral.  ``W`` already holds
    the singular factor and the Jacobian.  Degenerate cells ``t == s`` get
    zero weights.
    """
    s, t, tau = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, t, tau)))
    x, xc, w = tanh_sinh_rule(float(h), float(umax))
    q = 1.0 / (1.0 - power)
    L = tau - s
    live = (t > s) & (L > 0)
    Ls = np.where(live, L, 1.0)
    a = np.where(live, (t - s) / Ls, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        om = np.where(a < 1.0, -np.expm1(np.log1p(-np.minimum(a, 1.0)) / q), 1.0)
    om = np.where(live, om, 0.0)[..., None]
    Lx = Ls[..., None]
    xi = (1.0 - om) + om * x
    one_m_xi = om * xc
    tmr = Lx * xi**q
    with np.errstate(divide="ignore"):
        rms = -Lx * np.expm1(q * np.log1p(-one_m_xi))
    r = np.where(rms < tmr, s[..., None] + rms, tau[..., None] - tmr)
    W = q * Lx ** (1.0 - power) * om * w
    return r, W


def _pl_segments(times: np.ndarray, s: np.ndarray, t: np.ndarray):
    """Split each ``[s, t]`` at the sample times of a piecewise-linear path.

    Returns padded segment endpoints ``(a, b)`` of shape ``s.shape + (K,)``
    and the segment indices; padding segments have ``a == b``.
    """
    j0 = np.clip(np.searchsorted(times, s, side="right") - 1, 0, times.size - 2)
    j1 = np.clip(np.searchsorted(times, t, side="left") - 1, 0, times.size - 2)
    j1 = np.maximum(j1, j0)
    K = int(np.max(j1 - j0)) + 1 if s.size else 1
    seg = j0[..., None] + np.arange(K)
    valid = seg <= j1[..., None]
    seg = np.minimum(seg, times.size - 2)
    a = np.maximum(s[..., None], times[seg])
    b = np.minimum(t[..., None], times[seg + 1])
    a = np.where(valid, a, t[..., None])
    b = np.where(valid, np.maximum(b, a), t[..., None])
    return a, b, seg


def stieltjes_rule(path: DrivingPath, kernel: Kernel, s, t, tau, h: float, umax: float = 3.6):
    """Nodes and vector weights for ``int_s^t k(tau, r) dx_r g(r)``.

    Returns ``(r, W)`` with ``r`` of shape ``S + (n,)`` and ``W`` of shape
    ``S + (n, d)`` so that the integral is ``einsum('...na,...n->...a', W, g(r))``.
    Piecewise-linear paths are split at their sample times so that the rule
    never straddles a kink.
    """
    s, t, tau = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, t, tau)))
    if path.is_piecewise_linear:
        a, b, seg = _pl_segments(path.times, s, t)
        r, W = singular_rule(a, b, tau[..., None], kernel.power, h, umax)
        W = W * kernel.regular(tau[..., None, None], r)
        Wv = W[..., None] * path.slopes[seg][..., None, :]
        shape = s.shape + (-1,)
        return r.reshape(shape), Wv.reshape(s.shape + (-1, path.dim))
    r, W = singular_rule(s, t, tau, kernel.power, h, umax)
    W = W * kernel.regular(tau[..., None], r)
    return r, W[..., None] * path.derivative(r)


def level1_exact(path: DrivingPath, kernel: Kernel, s, t, tau):
    """Closed-form ``int_s^t k(tau, r) dx_r`` for piecewise-linear paths with a kernel primitive."""
    s, t, tau = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, t, tau)))
    a, b, seg = _pl_segments(path.times, s, t)
    with np.errstate(invalid="ignore"):
        prim = kernel.primitive(tau[..., None], a, b)
    prim = np.where(b > a, prim, 0.0)
    return np.einsum("...k,...ka->...a", prim, path.slopes[seg])


def has_exact_level1(path: DrivingPath, kernel: Kernel) -> bool:
    return path.is_piecewise_linear and kernel.primitive is not None
