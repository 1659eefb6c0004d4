"""Controlled Volterra paths, convolution products and composition.

Shape conventions (``V`` is the value shape of ``y``):

* ``y(t, tau)``                -> ``S + V``
* ``y_dot(t, tau, p)``         -> ``S + V + (d,)``
* ``y_cherry(t, tau, q, p)``   -> ``S + V + (d, d)``
* ``y_pair(t, tau, q, p)``     -> ``S + V + (d, d)``

All closures broadcast over their array arguments.  Upper arguments are
listed from the outermost integration variable inwards, and the trailing
``d`` axes pair with the corresponding signature indices in the same order.

Convolution products return, in tensor mode, ``(d,) * k + V`` where the
leading axes are the signature indices (outermost first).  With
``contract=True`` those indices are summed against the trailing ``k`` axes
of ``V`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DerivativeMismatch, InitialBundleMismatch, ValidationError
from .sewing import SewingExponents, riemann_sum, sew_single
from .signature import TreeSymbol, VolterraSignature


def _ex(x, k: int = 1):
    """Append ``k`` singleton axes."""
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape + (1,) * k)


def _like(x, r):
    """Broadcast a bound ``x`` to the node array ``r`` of the enclosing integral."""
    return np.broadcast_to(np.asarray(x, dtype=float), np.shape(r))


def contract(T: np.ndarray, k: int) -> np.ndarray:
    """Contract a tensor-mode convolution result of order ``k`` (no batch axes)."""
    T = np.asarray(T)
    if k == 0:
        return T
    d = T.shape[0]
    sig_axes = "abc"[:k]
    rest = T.ndim - 2 * k
    letters = "ijklmnopqrstuvwxyz"[:rest]
    return np.einsum(f"{sig_axes}{letters}{sig_axes}->{letters}", T)


# --------------------------------------------------------------------------
# convolution products
# --------------------------------------------------------------------------

def _check_method(method):
    if method not in ("quadrature", "sewing"):
        raise ValidationError(f"unknown convolution method {method!r}", "conv.method")


def _conv1_quad(sig, u, t, tau, y_upper, contract_, depth):
    return sig.kint(u, t, tau, lambda r, dp: y_upper(r), depth, contract=contract_)


def _conv2_quad(sig, s, t, tau, y12, contract_, depth):
    s = np.asarray(s, dtype=float)

    def outer_f(r1, dp):
        return sig.kint(_ex(s), r1, r1, lambda r2, dq: y12(_ex(r1), r2), dp, contract=contract_)

    return sig.kint(s, t, tau, outer_f, depth, contract=contract_)


def _chain3_quad(sig, s, t, tau, y123, contract_, depth):
    s = np.asarray(s, dtype=float)

    def f1(r1, dp):
        def f2(r2, dq):
            return sig.kint(_ex(s, 2), r2, r2, lambda r3, dr: y123(_ex(r1, 2), _ex(r2), r3), dq, contract=contract_)

        return sig.kint(_ex(s), r1, r1, f2, dp, contract=contract_)

    return sig.kint(s, t, tau, f1, depth, contract=contract_)


def _vee_quad(sig, s, t, tau, y123, contract_, depth):
    s = np.asarray(s, dtype=float)

    def f1(r1, dp):
        def f2(r2, dq):
            # second leaf: independent integral over [s, r1] with upper variable r1
            return sig.kint(_like(_ex(s, 2), r2), _like(_ex(r1), r2), _like(_ex(r1), r2),
                            lambda r3, dr: y123(_ex(r1, 2), _ex(r2), r3), dq, contract=contract_)

        return sig.kint(_ex(s), r1, r1, f2, dp, contract=contract_)

    return sig.kint(s, t, tau, f1, depth, contract=contract_)


def _pair_quad(sig, s, t, tau, y23, contract_, depth):
    s, t, tau = (np.asarray(v, dtype=float) for v in (s, t, tau))

    def f2(r2, dp):
        return sig.kint(_like(_ex(s), r2), _like(_ex(t), r2), _like(_ex(tau), r2),
                        lambda r3, dq: y23(_ex(r2), r3), dp, contract=contract_)

    return sig.kint(s, t, tau, f2, depth, contract=contract_)


def conv1(sig: VolterraSignature, s: float, u: float, t: float, tau: float, y_upper: Callable,
          contract: bool = False, method: str = "quadrature", level: Optional[int] = None,
          tol: Optional[float] = None, max_level: int = 12, depth: int = 0):
    """``z^{.,tau}_{tu} * y^{.}_s = int_u^t k(tau, r) dx_r (x) y_upper(r)``.

    ``s`` is the lower time of the integrand and is only recorded by the
    closure ``y_upper``.  With ``method="sewing"`` the value is the limit of
    ``sum z^{.,tau}_{v'u'} y_upper(u')`` over dyadic partitions of ``[u, t]``;
    passing ``level`` returns the Riemann sum at that level instead.
    """
    _check_method(method)
    if not (s <= u < t <= tau):
        raise ValidationError("conv1 needs s <= u < t <= tau", "conv.order")
    if method == "quadrature" and level is None:
        return _conv1_quad(sig, u, t, tau, y_upper, contract, depth)

    def germ(a, b):
        z = sig._l1(a, b, np.full_like(a, tau), 0)
        val = np.asarray(y_upper(a), dtype=float)
        T = np.einsum("nd,np->ndp", z, val.reshape(a.size, -1)).reshape((a.size, sig.d) + val.shape[1:])
        return _contract_batch(T, 1) if contract else T

    return _sew_or_sum(germ, u, t, tau, level, tol, max_level)


def _contract_batch(T, k):
    if k == 0:
        return T
    sig_axes = "abc"[:k]
    rest = T.ndim - 1 - 2 * k
    letters = "ijklmopqrstuvwxyz"[:rest]
    return np.einsum(f"n{sig_axes}{letters}{sig_axes}->n{letters}", T)


def _sew_or_sum(germ, a, b, tau, level, tol, max_level):
    if level is not None:
        return riemann_sum(germ, a, b, int(level), vectorized=True)
    # the germ defect is at least of order 1 + (1 - kappa); only beta > 1 matters here
    exps = SewingExponents(beta=1.5, kappa=0.0)
    val, _ = sew_single(lambda u, v, _tau: germ(u, v), exps, (a, b), tau, tol=tol, max_level=max_level,
                        vectorized=True)
    return val


def _outer_batch(z, y):
    """Per-row tensor product of ``z`` (n, *A) and ``y`` (n, *B)."""
    n = z.shape[0]
    return (z.reshape(z.shape + (1,) * (y.ndim - 1)) * y.reshape((n,) + (1,) * (z.ndim - 1) + y.shape[1:]))


def conv2(sig: VolterraSignature, s: float, t: float, tau: float, y12: Callable, contract: bool = False,
          method: str = "quadrature", level: Optional[int] = None, tol: Optional[float] = None,
          max_level: int = 10, depth: int = 0):
    """``z^{[.],tau}_{ts} * y^{1,2}_s``.

    Quadrature mode evaluates
    ``int_s^t k(tau, r1) dx_{r1} (x) int_s^{r1} k(r1, r2) dx_{r2} (x) y12(r1, r2)``.
    Sewing mode sums ``z^{[.],tau}_{vu} y12(u, u) + (delta_u z^{[.],tau}_{vs}) * y12``
    over dyadic cells; the correction is split as
    ``(delta_u z_{vs}) y12(u, u)`` (from signature values, so constant
    integrands telescope exactly) plus a quadrature of ``y12 - y12(u, u)``.
    """
    _check_method(method)
    if not (s < t <= tau):
        raise ValidationError("conv2 needs s < t <= tau", "conv.order")
    if method == "quadrature" and level is None:
        return _conv2_quad(sig, s, t, tau, y12, contract, depth)

    def germ(a, b):
        n = a.size
        taus = np.full(n, tau)
        ss = np.full(n, s)
        ya = np.asarray(y12(a, a), dtype=float)
        z_ba = sig._l2(a, b, taus, 0)
        dz = sig._l2(ss, b, taus, 0) - z_ba - sig._l2(ss, a, taus, 0)
        main = _outer_batch(z_ba, ya) + _outer_batch(dz, ya)

        def f1(r1, dp):
            return sig.kint(_ex(ss), _ex(a), r1,
                            lambda r2, dq: y12(_ex(r1), r2) - ya.reshape((n, 1, 1) + ya.shape[1:]),
                            dp)

        q = sig.kint(a, b, taus, f1, 1)
        T = main + q
        return _contract_batch(T, 2) if contract else T

    return _sew_or_sum(germ, s, t, tau, level, tol, max_level)


def conv3(sig: VolterraSignature, sigma, s: float, t: float, tau: float, y123: Callable,
          contract: bool = False, method: str = "quadrature", level: Optional[int] = None,
          tol: Optional[float] = None, max_level: int = 8, depth: int = 0):
    """``z^{sigma,tau}_{ts} * y^{1,2,3}_s`` for ``sigma`` in {chain3, vee}.

    ``y123(r1, r2, r3)`` takes the root variable first.  For the chain the
    variables are nested ``r1 > r2 > r3``; for the vee both leaves ``r2`` and
    ``r3`` run over ``[s, r1]``.  Sewing mode mirrors :func:`conv2`: the
    Chen defect times ``y123(u, u, u)`` comes from signature values and the
    remainder of ``(delta_u z_{vs}) * y123`` is integrated over the split
    regions with ``y123 - y123(u, u, u)``.
    """
    _check_method(method)
    sym = TreeSymbol.parse(sigma)
    if sym not in (TreeSymbol.CHAIN3, TreeSymbol.VEE):
        raise ValidationError("conv3 accepts chain3 or vee", "conv.sigma")
    if not (s < t <= tau):
        raise ValidationError("conv3 needs s < t <= tau", "conv.order")
    if method == "quadrature" and level is None:
        fn = _chain3_quad if sym is TreeSymbol.CHAIN3 else _vee_quad
        return fn(sig, s, t, tau, y123, contract, depth)
    zfun = sig._chain3 if sym is TreeSymbol.CHAIN3 else sig._vee

    def germ(a, b):
        n = a.size
        taus = np.full(n, tau)
        ss = np.full(n, s)
        ya = np.asarray(y123(a, a, a), dtype=float)
        z_ba = zfun(a, b, taus, 0)
        dz = zfun(ss, b, taus, 0) - z_ba - zfun(ss, a, taus, 0)
        main = _outer_batch(z_ba, ya) + _outer_batch(dz, ya)
        yv = ya.reshape((n, 1, 1, 1) + ya.shape[1:])

        def diff(r1, r2, r3):
            return y123(r1, r2, r3) - yv

        q = _split_regions(sig, sym, ss, a, b, taus, diff)
        T = main + q
        return _contract_batch(T, 3) if contract else T

    return _sew_or_sum(germ, s, t, tau, level, tol, max_level)


def _split_regions(sig, sym, s, a, b, tau, diff):
    """Integral of ``diff`` over the part of the tree region with root in ``[a, b]``
    and at least one leaf variable below ``a`` (the Chen defect region).

    ``diff(r1, r2, r3)`` receives node arrays whose leading axis is the cell.
    """
    if sym is TreeSymbol.CHAIN3:
        # r2 < a (then r3 < r2)
        def fa1(r1, dp):
            def fa2(r2, dq):
                return sig.kint(_ex(s, 2), r2, r2, lambda r3, dr: diff(_ex(r1, 2), _ex(r2), r3), dq)
            return sig.kint(_ex(s), _ex(a), r1, fa2, dp)

        # r2 > a > r3
        def fb1(r1, dp):
            def fb2(r2, dq):
                return sig.kint(_ex(s, 2), _ex(a, 2), r2, lambda r3, dr: diff(_ex(r1, 2), _ex(r2), r3), dq)
            return sig.kint(_ex(a), r1, r1, fb2, dp)

        return sig.kint(a, b, tau, fa1, 1) + sig.kint(a, b, tau, fb1, 1)

    total = 0.0
    for lo2_is_s, lo3_is_s in ((True, True), (True, False), (False, True)):
        def f1(r1, dp, lo2_is_s=lo2_is_s, lo3_is_s=lo3_is_s):
            lo2, hi2 = (_ex(s), _ex(a)) if lo2_is_s else (_ex(a), r1)

            def f2(r2, dq):
                lo3, hi3 = (_ex(s, 2), _ex(a, 2)) if lo3_is_s else (_ex(a, 2), _ex(r1))
                return sig.kint(_like(lo3, r2), _like(hi3, r2), _like(_ex(r1), r2),
                                lambda r3, dr: diff(_ex(r1, 2), _ex(r2), r3), dq)

            return sig.kint(lo2, hi2, r1, f2, dp)

        total = total + sig.kint(a, b, tau, f1, 1)
    return total


def conv_pair(sig: VolterraSignature, s: float, t: float, tau: float, y23: Callable, contract: bool = False,
              depth: int = 0):
    """``z^{..,tau}_{ts} * y^{2,3}_s = int_s^t int_s^t k(tau, r2) k(tau, r3) dx_{r2} (x) dx_{r3} y23(r2, r3)``."""
    if not (s < t <= tau):
        raise ValidationError("conv_pair needs s < t <= tau", "conv.order")
    return _pair_quad(sig, s, t, tau, y23, contract, depth)


def lift_upper(y12: Callable) -> Callable:
    """Return ``yhat(t, r1, r2, r3) = y12(t, r2, r3)``, ignoring the first upper argument."""

    def lifted(t, r1, r2, r3):
        out = np.asarray(y12(t, r2, r3), dtype=float)
        inner = np.broadcast(np.asarray(t), np.asarray(r2), np.asarray(r3)).nd
        lead = np.broadcast(np.asarray(t), np.asarray(r1), np.asarray(r2), np.asarray(r3)).shape
        return np.broadcast_to(out, lead + out.shape[inner:])

    return lifted


# --------------------------------------------------------------------------
# controlled paths
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlledPath:
    """A bundle ``(y, y_dot, y_cherry, y_pair)``; see the module docstring for shapes.

    ``has_cherry`` / ``has_pair`` flag slots known to vanish identically so
    that consumers can skip their convolutions.  ``in_D_hat`` marks bundles
    whose derivative slots drop the first upper argument and whose pair slot
    is zero.
    """

    y: Callable
    y_dot: Callable
    y_cherry: Callable
    y_pair: Callable
    value_shape: tuple
    d: int
    in_D_hat: bool = False
    has_dot: bool = True
    has_cherry: bool = True
    has_pair: bool = True
    label: str = ""
    data: Optional[dict] = None  # representation details (node values, rules) for integrated paths

    def initial_bundle(self, tau: float = 0.0):
        """``(y_0, y_dot_0, y_cherry_0, y_pair_0)`` read at upper arguments ``tau``."""
        return (np.asarray(self.y(0.0, tau)), np.asarray(self.y_dot(0.0, tau, tau)),
                np.asarray(self.y_cherry(0.0, tau, tau, tau)), np.asarray(self.y_pair(0.0, tau, tau, tau)))

    def check_initial(self, taus: Sequence[float], atol: float = 1e-12):
        """Raise :class:`InitialBundleMismatch` unless all slices agree at ``t = 0``."""
        ref = self.initial_bundle(taus[0])
        for tau in taus[1:]:
            cur = self.initial_bundle(tau)
            for name, a, b in zip(("y", "y_dot", "y_cherry", "y_pair"), ref, cur):
                if np.max(np.abs(a - b), initial=0.0) > atol * max(1.0, np.max(np.abs(a), initial=0.0)):
                    raise InitialBundleMismatch(f"initial {name} differs between slices", f"initial.{name}")
        return ref

    def diagonal(self, t):
        t = np.asarray(t, dtype=float)
        return self.y(t, t)


def _zeros(shape_tail):
    def z(*args):
        lead = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.zeros(lead + tuple(shape_tail))
    return z


def constant_lift(c, d: int) -> ControlledPath:
    """``y^tau_t = c`` with vanishing derivatives."""
    c = np.asarray(c, dtype=float)
    V = c.shape

    def y(t, tau):
        lead = np.broadcast(np.asarray(t), np.asarray(tau)).shape
        return np.broadcast_to(c, lead + V).copy()

    return ControlledPath(y, _zeros(V + (d,)), _zeros(V + (d, d)), _zeros(V + (d, d)), V, d, in_D_hat=True,
                          has_dot=False, has_cherry=False, has_pair=False, label="constant")


def canonical_lift(sig: VolterraSignature, y0=None) -> ControlledPath:
    """``y^tau_t = y0 + z^{.,tau}_{t0}`` with ``y_dot = identity`` and higher slots zero."""
    d = sig.d
    y0 = np.zeros(d) if y0 is None else np.asarray(y0, dtype=float)
    eye = np.eye(d)

    def y(t, tau):
        t, tau = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau, dtype=float))
        return y0 + sig._l1(np.zeros_like(t), t, tau, 1)

    def y_dot(t, tau, p):
        lead = np.broadcast(np.asarray(t), np.asarray(tau), np.asarray(p)).shape
        return np.broadcast_to(eye, lead + (d, d)).copy()

    return ControlledPath(y, y_dot, _zeros((d, d, d)), _zeros((d, d, d)), (d,), d, in_D_hat=True,
                          has_cherry=False, has_pair=False, label="canonical")


def tau_constant_lift(h: Callable, value_shape: tuple, d: int) -> ControlledPath:
    """``y^tau_t = h(t)`` independent of ``tau``; derivative slots are left at zero."""

    def y(t, tau):
        t = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau, dtype=float))[0]
        return np.asarray(h(t), dtype=float).reshape(t.shape + tuple(value_shape))

    V = tuple(value_shape)
    return ControlledPath(y, _zeros(V + (d,)), _zeros(V + (d, d)), _zeros(V + (d, d)), V, d, label="tau-constant",
                          has_dot=False, has_cherry=False, has_pair=False)


# --------------------------------------------------------------------------
# smooth functions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SmoothFunction:
    """``f: R^m -> L(R^d, R^m)`` with explicit derivatives.

    ``f(y)`` maps ``(..., m)`` to ``(..., m, d)``; ``derivs[k-1](y)`` returns
    the k-th derivative with shape ``(..., m, d) + (m,) * k``.
    """

    m: int
    d: int
    f: Callable
    derivs: tuple
    bound: float = float("nan")
    name: str = "custom"
    degree: Optional[int] = None  # polynomial degree when known (0 constant, 1 affine)

    def __call__(self, y):
        return self.f(np.asarray(y, dtype=float))

    def deriv(self, k: int, y):
        if k == 0:
            return self(y)
        if k > len(self.derivs):
            raise ValidationError(f"{self.name}: derivative of order {k} not supplied", "f.derivative_order")
        return self.derivs[k - 1](np.asarray(y, dtype=float))

    @property
    def order(self) -> int:
        return len(self.derivs)

    @property
    def vanishing_first(self) -> bool:
        return self.degree == 0

    @property
    def vanishing_second(self) -> bool:
        return self.degree is not None and self.degree <= 1

    def check(self, n_probe: int = 5, seed: int = 0, rtol: float = 1e-5, scale: float = 1.0):
        """Compare each derivative with central differences of the previous one.

        Raises :class:`DerivativeMismatch` when the relative error exceeds ``rtol``.
        """
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-scale, scale, size=(n_probe, self.m))
        h = 1e-5
        for k in range(1, self.order + 1):
            exact = self.deriv(k, pts)
            fd = np.empty_like(exact)
            for j in range(self.m):
                e = np.zeros(self.m)
                e[j] = h
                fd[..., j] = (self.deriv(k - 1, pts + e) - self.deriv(k - 1, pts - e)) / (2 * h)
            err = np.max(np.abs(fd - exact) / np.maximum(1.0, np.abs(exact)))
            if err > rtol:
                raise DerivativeMismatch(f"{self.name}: derivative {k} disagrees with finite differences "
                                         f"(relative error {err:.2e})", f"f.derivative_{k}")
        return self


def _batch_shape(y, m):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != m:
        raise ValidationError(f"expected trailing dimension {m}, got {y.shape}", "f.input_shape")
    return y.shape[:-1]


def constant_function(C, order: int = 5) -> SmoothFunction:
    """``f(y) = C`` for a fixed ``(m, d)`` matrix."""
    C = np.asarray(C, dtype=float)
    m, d = C.shape

    def f(y):
        return np.broadcast_to(C, _batch_shape(y, m) + (m, d)).copy()

    def dk(k):
        return lambda y: np.zeros(_batch_shape(y, m) + (m, d) + (m,) * k)

    return SmoothFunction(m, d, f, tuple(dk(k) for k in range(1, order + 1)), float(np.max(np.abs(C))),
                          "constant", degree=0)


def linear_function(L, b=None, order: int = 5) -> SmoothFunction:
    """``f(y)[o, a] = b[o, a] + sum_j L[o, a, j] y_j``."""
    L = np.asarray(L, dtype=float)
    m, d, m2 = L.shape
    if m2 != m:
        raise ValidationError("L must have shape (m, d, m)", "f.shape")
    b = np.zeros((m, d)) if b is None else np.asarray(b, dtype=float)

    def f(y):
        _batch_shape(y, m)
        return b + np.einsum("oaj,...j->...oa", L, y)

    def d1(y):
        return np.broadcast_to(L, _batch_shape(y, m) + L.shape).copy()

    def dk(k):
        return lambda y: np.zeros(_batch_shape(y, m) + (m, d) + (m,) * k)

    return SmoothFunction(m, d, f, (d1,) + tuple(dk(k) for k in range(2, order + 1)), float("inf"), "linear", degree=1)


def _sin_table(k, x):
    return [np.sin, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v)][k % 4](x)


def _cos_table(k, x):
    return _sin_table(k + 1, x)


def _logistic_table(k, x):
    S = 1.0 / (1.0 + np.exp(-x))
    d1 = S * (1.0 - S)
    if k == 0:
        return S
    if k == 1:
        return d1
    if k == 2:
        return d1 * (1.0 - 2.0 * S)
    if k == 3:
        return d1 * (1.0 - 6.0 * S + 6.0 * S**2)
    if k == 4:
        return d1 * (1.0 - 2.0 * S) * (1.0 - 12.0 * S + 12.0 * S**2)
    if k == 5:
        return d1 * (1.0 - 30.0 * S + 150.0 * S**2 - 240.0 * S**3 + 120.0 * S**4)
    raise ValidationError("logistic derivatives are tabulated up to order 5", "f.derivative_order")


_TABLES = {"sin": (_sin_table, 1.0), "cos": (_cos_table, 1.0), "logistic": (_logistic_table, 1.0)}


def separable_function(kind: str, A=None, b=None, m: int = 1, d: int = 1, scale: float = 1.0,
                       order: int = 5) -> SmoothFunction:
    """``f(y)[o, a] = b[o, a] + scale * sum_j A[o, a, j] g(y_j)`` with ``g`` in {sin, cos, logistic}.

    The default ``A[o, a, j] = 1 if j == o`` makes ``f`` act componentwise,
    so ``separable_function("sin")`` is ``f(y) = sin(y)`` for ``m = d = 1``.
    """
    if kind not in _TABLES:
        raise ValidationError(f"unknown separable kind {kind!r}", "f.kind")
    table, gmax = _TABLES[kind]
    if A is None:
        A = np.zeros((m, d, m))
        for o in range(m):
            A[o, :, o] = 1.0
    A = np.asarray(A, dtype=float) * scale
    m, d, _ = A.shape
    b = np.zeros((m, d)) if b is None else np.asarray(b, dtype=float)

    def f(y):
        _batch_shape(y, m)
        return b + np.einsum("oaj,...j->...oa", A, table(0, y))

    def dk(k):
        def deriv(y):
            lead = _batch_shape(y, m)
            g = table(k, y)  # (..., m)
            out = np.zeros(lead + (m, d) + (m,) * k)
            diag = A * g[..., None, None, :]  # (..., m, d, m)
            idx = np.arange(m)
            out[(Ellipsis, slice(None), slice(None)) + (idx,) * k] = diag
            return out
        return deriv

    bound = float(np.max(np.abs(b)) + np.max(np.sum(np.abs(A), axis=-1)) * gmax)
    return SmoothFunction(m, d, f, tuple(dk(k) for k in range(1, order + 1)), bound, f"separable-{kind}")


def ridge_function(kind: str, A, W, b=None, order: int = 5) -> SmoothFunction:
    """``f(y)[o, a] = b[o, a] + A[o, a] g(sum_j W[o, a, j] y_j)``; derivatives are rank one per entry."""
    table, gmax = _TABLES[kind]
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    m, d = A.shape
    b = np.zeros((m, d)) if b is None else np.asarray(b, dtype=float)

    def proj(y):
        _batch_shape(y, m)
        return np.einsum("oaj,...j->...oa", W, y)

    def f(y):
        return b + A * table(0, proj(y))

    def dk(k):
        def deriv(y):
            acc = A * table(k, proj(y))
            for i in range(k):
                acc = acc[..., None] * W.reshape((m, d) + (1,) * i + (m,))
            return acc
        return deriv

    bound = float(np.max(np.abs(b)) + np.max(np.abs(A)) * gmax)
    return SmoothFunction(m, d, f, tuple(dk(k) for k in range(1, order + 1)), bound, f"ridge-{kind}")


def builtin_function(name: str, m: int = 1, d: int = 1, value=None, scale: float = 1.0) -> SmoothFunction:
    """Named families used by the CLI: constant, linear, sin, cos, logistic."""
    if name == "constant":
        C = np.full((m, d), 1.0 if value is None else 0.0)
        if value is not None:
            C = np.broadcast_to(np.asarray(value, dtype=float), (m, d)).copy()
        return constant_function(C)
    if name == "linear":
        L = np.zeros((m, d, m))
        for o in range(m):
            L[o, :, o] = scale if value is None else float(value)
        return linear_function(L)
    if name in _TABLES:
        return separable_function(name, m=m, d=d, scale=scale)
    raise ValidationError(f"unknown function family {name!r}", "f.kind")


# --------------------------------------------------------------------------
# composition
# --------------------------------------------------------------------------

def compose(f: SmoothFunction, y: ControlledPath) -> ControlledPath:
    """``phi = f(y)`` as a controlled path with values in ``L(R^d, R^m)``.

    * ``phi^tau_t = f(y^tau_t)``
    * ``phi_dot(t, tau, p) = f'(y^tau_t)[y_dot(t, ., p)]``
    * ``phi_cherry(t, tau, q, p) = f'(y^tau_t)[y_cherry(t, ., q, p)]``
    * ``phi_pair(t, tau, q, p) = 1/2 f''(y^tau_t)[y_dot(t, ., q), y_dot(t, ., p)]``

    ``y`` must be in D-hat with values in R^m.
    """
    if not y.in_D_hat:
        raise ValidationError("compose is defined on D-hat bundles only", "compose.D_hat")
    if y.value_shape != (f.m,) or y.d != f.d:
        raise ValidationError(f"shape mismatch: y has values {y.value_shape} and d={y.d}, f expects m={f.m}, d={f.d}",
                              "compose.shape")
    m, d = f.m, f.d

    def phi(t, tau):
        return f(y.y(t, tau))

    def phi_dot(t, tau, p):
        A = f.deriv(1, y.y(t, tau))
        return np.einsum("...oaj,...jb->...oab", A, y.y_dot(t, tau, p))

    def phi_cherry(t, tau, q, p):
        A = f.deriv(1, y.y(t, tau))
        return np.einsum("...oaj,...jbc->...oabc", A, y.y_cherry(t, tau, q, p))

    def phi_pair(t, tau, q, p):
        B = f.deriv(2, y.y(t, tau))
        return 0.5 * np.einsum("...oajk,...jb,...kc->...oabc", B, y.y_dot(t, tau, q), y.y_dot(t, tau, p))

    live_first = y.has_dot and not f.vanishing_first
    return ControlledPath(phi, phi_dot, phi_cherry, phi_pair, (m, d), d, in_D_hat=False,
                          has_dot=live_first, has_cherry=y.has_cherry and not f.vanishing_first,
                          has_pair=y.has_dot and not f.vanishing_second, label=f"{f.name}({y.label})")


# --------------------------------------------------------------------------
# remainders
# --------------------------------------------------------------------------

def remainder_y(sig: VolterraSignature, y: ControlledPath, s: float, t: float, tau: float) -> np.ndarray:
    """``R^{y,tau}_{ts} = y_ts - z^. * y_dot - z^{[.]} * y_cherry - z^{..} * y_pair`` (all at lower time s)."""
    out = np.asarray(y.y(t, tau), dtype=float) - np.asarray(y.y(s, tau), dtype=float)
    if y.has_dot:
        out = out - conv1(sig, s, s, t, tau, lambda r: y.y_dot(s, tau, r), contract=True)
    if y.has_cherry:
        out = out - conv2(sig, s, t, tau, lambda r1, r2: y.y_cherry(s, tau, r1, r2), contract=True)
    if y.has_pair:
        out = out - conv_pair(sig, s, t, tau, lambda r2, r3: y.y_pair(s, tau, r2, r3), contract=True)
    return out


def remainder_dot(sig: VolterraSignature, y: ControlledPath, s: float, t: float, tau: float, p: float) -> np.ndarray:
    """``R^{.,tau,p}_{ts} = y_dot^{tau,p}_{ts} - z^{.,tau}_{ts} * (y_cherry^{tau,p,.}_s + 2 y_pair^{tau,p,.}_s)``."""
    out = np.asarray(y.y_dot(t, tau, p), dtype=float) - np.asarray(y.y_dot(s, tau, p), dtype=float)
    if y.has_cherry or y.has_pair:
        def integrand(r):
            val = 0.0
            if y.has_cherry:
                val = val + y.y_cherry(s, tau, p, r)
            if y.has_pair:
                val = val + 2.0 * y.y_pair(s, tau, p, r)
            return val
        out = out - conv1(sig, s, s, t, tau, integrand, contract=True)
    return out


def cancellation_sides(f2: np.ndarray, T: np.ndarray, P: np.ndarray, Y2: np.ndarray):
    """Both sides of the cancellation identity in coordinates.

    ``f2[o, a, i, j]`` is ``f''(y^tau_s)``; ``T[c, i, i1]`` is the tensor-mode
    convolution ``z^{.,tau}_{ts} * y_dot^{.}_s``; ``P[c, i, i1, j, j1]`` is the
    convolution of ``y_dot^{.}_s (x) y_dot^{tau}_s``; ``Y2[j, j1]`` is
    ``y_dot^{tau}_s``.  Returns ``(L, M)`` as ``(m, d, d)`` arrays acting on
    ``a^{j1}``.
    """
    v = np.einsum("cic->i", T)
    L = np.einsum("oaij,i,jk->oak", f2, v, Y2)
    M = np.einsum("oaij,cicjk->oak", f2, P)
    return L, M


def cancellation_check(y: ControlledPath, f: SmoothFunction, s: float, t: float, tau: float,
                       sig: VolterraSignature) -> float:
    """Max-norm difference of the two coordinate forms of the cancellation identity.

    The left side contracts the convolution ``z * y_dot`` first and then
    multiplies by ``y_dot^tau``; the right side convolves the tensor product
    ``y_dot^. (x) y_dot^tau`` and contracts afterwards.
    """
    if not (s < t <= tau):
        raise ValidationError("cancellation_check needs s < t <= tau", "cancellation.order")
    ys = np.asarray(y.y(s, tau), dtype=float)
    f2 = f.deriv(2, ys)
    Y2 = np.asarray(y.y_dot(s, tau, tau), dtype=float)
    T = conv1(sig, s, s, t, tau, lambda r: y.y_dot(s, tau, r))
    P = conv1(sig, s, s, t, tau, lambda r: np.einsum("...ik,jl->...ikjl", y.y_dot(s, tau, r), Y2))
    L, M = cancellation_sides(f2, T, P, Y2)
    return float(np.max(np.abs(L - M), initial=0.0))
