"""Rough Volterra integration of controlled paths.

``rough_integral`` sews the four-term germ

    Xi^tau_{vu} = z^{.,tau}_{vu} * y_u + z^{[.],tau}_{vu} * y_dot_u
                + z^{[[.]],tau}_{vu} * y_cherry_u + z^{[..],tau}_{vu} * y_pair_u

over dyadic partitions.  The four terms of a cell are evaluated together so
that they share their partition nodes.

For drivers of bounded variation (every driver this package builds) the
sewn limit coincides with the Stieltjes integral ``int k(tau, r) dx_r y^r_r``.
That identity is used for the evaluation of ``w`` at arbitrary points and by
:class:`ProductRule`, which integrates an interpolated diagonal integrand
and backs the solver's Picard iteration.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from ._version import __version__
from .controlled import ControlledPath, _chain3_quad, _conv2_quad, _vee_quad
from .errors import ExponentError, ValidationError
from .grid import TimeGrid
from .quadrature import QuadratureSpec, stieltjes_rule, tanh_sinh_rule
from .sewing import SewingDiagnostics, SewingExponents, sew_single
from .signature import VolterraSignature

log = logging.getLogger(__name__)

TRACE_HEADER = ("t", "tau", "component", "value")

# The third-order germ terms shrink like the cube of the cell length, so a
# coarse rule suffices at nesting depth 2; lower orders keep the fine steps.
GERM_QUAD = QuadratureSpec(h=1.0 / 4.0, h_inner=1.0 / 4.0, h_deep=1.0 / 2.0)
_CELL_BUDGET = 2_000_000


def _at(u: np.ndarray, r) -> np.ndarray:
    """Reshape the per-cell lower time ``u`` to broadcast against node arrays ``r``."""
    return u.reshape(u.shape + (1,) * (np.ndim(r) - u.ndim))


def sewing_exponents(sig: VolterraSignature, alpha: Optional[float] = None) -> SewingExponents:
    """``beta = 4 rho + gamma`` and ``kappa = gamma`` for the configured exponents."""
    gamma = float(sig.kernel.gamma)
    alpha = float(sig.path.alpha_hint if alpha is None else alpha)
    rho = alpha - gamma
    beta = 4.0 * rho + gamma
    if not beta > 1.0:
        raise ExponentError(f"4 rho + gamma = {beta:.4g} must exceed 1 (alpha={alpha}, gamma={gamma})",
                            "integrate.4rho+gamma>1")
    return SewingExponents(beta=beta, kappa=gamma, alpha=alpha, gamma=gamma)


def _germ_batch(sig, y, u, v, tau, depth):
    out = sig.kint(u, v, tau, lambda r, dp: y.y(_at(u, r), r), depth, contract=True)
    if y.has_dot:
        out = out + _conv2_quad(sig, u, v, tau, lambda r1, r2: y.y_dot(_at(u, r2), r1, r2), True, depth)
    if y.has_cherry:
        out = out + _chain3_quad(sig, u, v, tau, lambda r1, r2, r3: y.y_cherry(_at(u, r3), r1, r2, r3), True,
                                 depth)
    if y.has_pair:
        out = out + _vee_quad(sig, u, v, tau, lambda r1, r2, r3: y.y_pair(_at(u, r3), r1, r2, r3), True, depth)
    return out


def germ_cells(sig: VolterraSignature, y: ControlledPath, u, v, tau, depth: int = 0,
               quad: Optional[QuadratureSpec] = GERM_QUAD) -> np.ndarray:
    """``Xi^tau_{vu}`` for 1-d arrays of cells ``[u, v]``; returns ``u.shape + V[:-1]``.

    ``y`` has values in ``L(R^d, R^m)`` (trailing axis ``d``); every
    convolution is contracted against it.  Cells are processed in chunks
    to bound the size of the nested node arrays.
    """
    u, v, tau = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (u, v, tau)))
    if quad is not None and quad != sig.quad:
        # a sibling without the memo table; germs are never evaluated at master-grid tuples
        sig = VolterraSignature(sig.kernel, sig.path, quad)
    n = [tanh_sinh_rule(sig.quad.step(k), sig.quad.umax)[0].size for k in range(3)]
    per_cell = n[0] * n[1] * (n[2] if (y.has_cherry or y.has_pair) else 1)
    chunk = max(1, _CELL_BUDGET // per_cell)
    parts = [_germ_batch(sig, y, u[i:i + chunk], v[i:i + chunk], tau[i:i + chunk], depth)
             for i in range(0, u.size, chunk)]
    return np.concatenate(parts, axis=0)


def germ(sig: VolterraSignature, y: ControlledPath, s: float, t: float, tau: float) -> np.ndarray:
    """The germ ``Xi^tau_{ts}`` on a single interval."""
    return germ_cells(sig, y, np.array([s]), np.array([t]), np.array([tau]))[0]


def rough_integral(sig: VolterraSignature, y: ControlledPath, s: float, t: float, tau: float,
                   tol: Optional[float] = None, alpha: Optional[float] = None, max_level: int = 12,
                   min_level: int = 2):
    """Sew the germ over ``[s, t]`` with ``beta = 4 rho + gamma`` and ``kappa = gamma``.

    Returns ``(value, SewingDiagnostics)``.  ``alpha`` defaults to the
    driver's Hölder hint.
    """
    exps = sewing_exponents(sig, alpha)
    if not (s <= t <= tau):
        raise ValidationError("rough_integral needs s <= t <= tau", "integrate.order")
    if s == t:
        shape = np.asarray(y.y(s, tau)).shape[:-1]
        return np.zeros(shape), SewingDiagnostics(converged=True)
    return sew_single(lambda a, b, tau_: germ_cells(sig, y, a, b, np.full_like(a, tau_)), exps, (s, t), tau,
                      tol=tol, max_level=max_level, min_level=min_level, vectorized=True)


def stieltjes_integral(sig: VolterraSignature, y: ControlledPath, s, t, tau) -> np.ndarray:
    """``int_s^t k(tau, r) dx_r y^r_r`` by quadrature (broadcast over ``s, t, tau``)."""
    return sig.kint(s, t, tau, lambda r, dp: y.y(r, r), 0, contract=True)


def _dhat_bundle(w: Callable, y: ControlledPath, label: str, data: Optional[dict] = None) -> ControlledPath:
    """Attach the reassigned derivative slots ``(y^p_t, y_dot^{q,p}_t, 0)`` to ``w``."""
    V = tuple(y.value_shape[:-1])
    d = y.d

    def w_dot(t, tau, p):
        return np.asarray(y.y(t, p), dtype=float) * np.ones(np.shape(tau) + (1,) * len(y.value_shape))

    def w_cherry(t, tau, q, p):
        return np.asarray(y.y_dot(t, q, p), dtype=float) * np.ones(np.shape(tau) + (1,) * (len(y.value_shape) + 1))

    def w_pair(t, tau, q, p):
        lead = np.broadcast(np.asarray(t), np.asarray(tau), np.asarray(q), np.asarray(p)).shape
        return np.zeros(lead + V + (d, d))

    return ControlledPath(w, w_dot, w_cherry, w_pair, V, d, in_D_hat=True, has_dot=True,
                          has_cherry=y.has_dot, has_pair=False, label=label, data=data)


@dataclass
class RoughIntegralResult:
    """Integral ``w^tau_t = int_0^t k(tau, r) dx_r y^r_r`` with its D-hat bundle.

    ``diagonal`` holds sewn values ``w^t_t`` on ``grid``; ``slices`` maps a
    requested ``tau`` to sewn values ``w^tau_t`` for grid times ``t <= tau``.
    ``diagnostics`` maps ``(t, tau)`` to the sewing diagnostics, and
    ``quadrature_gap`` is the largest difference between sewn values and the
    quadrature evaluation of ``w``.
    """

    w: Callable
    as_controlled: ControlledPath
    grid: Optional[TimeGrid]
    diagonal: Optional[np.ndarray] = None
    slices: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    quadrature_gap: float = 0.0

    @property
    def in_D_hat(self) -> bool:
        return self.as_controlled.in_D_hat

    def trace_rows(self) -> list:
        rows = []
        if self.grid is None or self.diagonal is None:
            return rows
        pts = np.asarray(self.grid.points)
        for i, t in enumerate(pts):
            for c, v in enumerate(np.ravel(self.diagonal[i])):
                rows.append((repr(float(t)), repr(float(t)), str(c), repr(float(v))))
        for tau in sorted(self.slices):
            vals = self.slices[tau]
            for i, t in enumerate(pts[pts <= tau + 1e-15]):
                for c, v in enumerate(np.ravel(vals[i])):
                    rows.append((repr(float(t)), repr(float(tau)), str(c), repr(float(v))))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# volterra-rough {__version__} integral trace\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TRACE_HEADER)
        wr.writerows(self.trace_rows())
        return buf.getvalue()

    def diagnostics_dict(self) -> dict:
        return {"quadrature_gap": self.quadrature_gap,
                "sewing": [{"t": t, "tau": tau, **d.to_dict()} for (t, tau), d in sorted(self.diagnostics.items())]}


def integrate_to_controlled(sig: VolterraSignature, y: ControlledPath, grid: TimeGrid, tol: Optional[float] = None,
                            taus: Sequence[float] = (), alpha: Optional[float] = None, sew: bool = True,
                            max_level: int = 12) -> RoughIntegralResult:
    """Integrate ``y`` from 0 and return the result as a D-hat controlled path.

    With ``sew`` the diagonal ``w^t_t`` on ``grid`` and the slices
    ``w^tau_t`` for each ``tau`` in ``taus`` are computed by sewing; ``w`` at
    arbitrary points is always evaluated by quadrature.
    """
    sewing_exponents(sig, alpha)
    pts = np.asarray(grid.points, dtype=float)
    t0 = float(pts[0])

    def w(t, tau):
        t, tau = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau, dtype=float))
        return stieltjes_integral(sig, y, np.full_like(t, t0), t, tau)

    res = RoughIntegralResult(w, _dhat_bundle(w, y, f"int({y.label})"), grid)
    if not sew:
        return res
    diag, diags, gap = [], {}, 0.0
    for t in pts:
        val, dg = rough_integral(sig, y, t0, float(t), float(t), tol=tol, alpha=alpha, max_level=max_level)
        diag.append(val)
        diags[(float(t), float(t))] = dg
        gap = max(gap, float(np.max(np.abs(val - w(t, t)), initial=0.0)))
    res.diagonal = np.stack(diag)
    for tau in taus:
        vals = []
        for t in pts[pts <= tau + 1e-15]:
            val, dg = rough_integral(sig, y, t0, float(t), float(tau), tol=tol, alpha=alpha, max_level=max_level)
            vals.append(val)
            diags[(float(t), float(tau))] = dg
            gap = max(gap, float(np.max(np.abs(val - w(t, tau)), initial=0.0)))
        res.slices[float(tau)] = np.stack(vals)
    res.diagnostics = diags
    res.quadrature_gap = gap
    return res


# --------------------------------------------------------------------------
# product integration on collocation nodes
# --------------------------------------------------------------------------

class ProductRule:
    """Product integration of ``int_a^t k(tau, r) dx_r g(r)`` for ``g`` interpolated on nodes.

    ``[a, b]`` is split into ``cells`` cells (graded towards ``a`` when
    ``grading > 1``) each carrying ``nodes_per_cell`` Gauss-Legendre nodes.
    ``g`` is the piecewise polynomial interpolant of its node values, so the
    weights integrate the kernel and the driver exactly up to quadrature
    error of the singular rule.
    """

    def __init__(self, sig: VolterraSignature, a: float, b: float, cells: int = 4, nodes_per_cell: int = 6,
                 grading: float = 1.0):
        if not b > a:
            raise ValidationError(f"empty product-rule interval [{a}, {b}]", "rule.interval")
        self.sig = sig
        self.a, self.b = float(a), float(b)
        frac = np.linspace(0.0, 1.0, cells + 1) ** grading
        self.edges = self.a + (self.b - self.a) * frac
        self.edges[-1] = self.b
        x, _ = np.polynomial.legendre.leggauss(nodes_per_cell)
        self.ref = 0.5 * (x + 1.0)
        lo, hi = self.edges[:-1], self.edges[1:]
        self.nodes = (lo[:, None] + (hi - lo)[:, None] * self.ref[None, :]).ravel()
        self.cells, self.p = cells, nodes_per_cell
        # barycentric weights of the reference nodes
        diff = self.ref[:, None] - self.ref[None, :]
        np.fill_diagonal(diff, 1.0)
        self._bary = 1.0 / diff.prod(axis=1)

    @property
    def size(self) -> int:
        return self.nodes.size

    def _basis(self, xi: np.ndarray) -> np.ndarray:
        """Lagrange basis of the reference nodes at ``xi`` (any shape) -> ``xi.shape + (p,)``."""
        diff = xi[..., None] - self.ref
        exact = np.isclose(diff, 0.0, atol=1e-15)
        diff = np.where(exact, 1.0, diff)
        terms = self._bary / diff
        out = terms / terms.sum(axis=-1, keepdims=True)
        hit = exact.any(axis=-1)
        if np.any(hit):
            out = np.where(hit[..., None], exact.astype(float), out)
        return out

    def weights(self, t, tau) -> np.ndarray:
        """Weights ``(..., N, d)`` so that the integral is ``einsum('...jd,j...d', W, g_nodes)``."""
        t, tau = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau, dtype=float))
        lo = np.broadcast_to(self.edges[:-1], t.shape + (self.cells,))
        hi = np.minimum(self.edges[1:], t[..., None])
        hi = np.maximum(hi, lo)
        r, W = stieltjes_rule(self.sig.path, self.sig.kernel, lo, hi, tau[..., None], self.sig.quad.h,
                              self.sig.quad.umax)
        width = (self.edges[1:] - self.edges[:-1])
        xi = (r - self.edges[:-1][:, None]) / width[:, None]
        B = self._basis(xi)  # (..., K, n, p)
        out = np.einsum("...knd,...knp->...kpd", W, B)
        return out.reshape(t.shape + (self.size, self.sig.d))

    def apply(self, weights: np.ndarray, g_nodes: np.ndarray) -> np.ndarray:
        """Contract weights ``(..., N, d)`` with node values ``(N, m, d)`` -> ``(..., m)``."""
        return np.einsum("...jd,jmd->...m", weights, g_nodes)

    @cached_property
    def diagonal_matrix(self) -> np.ndarray:
        """``A[i, j, :]`` integrating from ``a`` to node ``i`` with upper argument node ``i``."""
        return self.weights(self.nodes, self.nodes)

    def integrate(self, g_nodes: np.ndarray, t, tau) -> np.ndarray:
        return self.apply(self.weights(t, tau), g_nodes)


def integrate_on_rule(rule: ProductRule, y: ControlledPath, history: Optional[Callable] = None,
                      diag_nodes: Optional[np.ndarray] = None) -> RoughIntegralResult:
    """``w^tau_t = H(tau) + int_a^t k(tau, r) dx_r y^r_r`` with the integrand sampled at the rule nodes.

    ``diag_nodes`` may supply ``y^r_r`` at the nodes when already known.
    The result's ``as_controlled.data`` stores the rule, the node values of
    the integrand and ``w`` on the diagonal nodes.
    """
    if diag_nodes is None:
        diag_nodes = np.asarray(y.y(rule.nodes, rule.nodes), dtype=float)
    G = diag_nodes.reshape((rule.size,) + tuple(y.value_shape))
    if G.ndim == 2:
        G = G[:, None, :]
    squeeze = len(y.value_shape) == 1

    def hist(tau):
        if history is None:
            return 0.0
        return np.asarray(history(tau), dtype=float)

    def w(t, tau):
        t, tau = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau, dtype=float))
        val = rule.integrate(G, t, tau)
        if squeeze:
            val = val[..., 0]
        return hist(tau) + val

    diag = rule.apply(rule.diagonal_matrix, G)
    if squeeze:
        diag = diag[..., 0]
    diag = hist(rule.nodes) + diag
    data = {"rule": rule, "integrand_nodes": G, "diagonal_nodes": diag}
    return RoughIntegralResult(w, _dhat_bundle(w, y, f"int({y.label})", data), None)
