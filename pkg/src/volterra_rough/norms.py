"""Grid estimates of the (alpha, gamma) Volterra norms and their relatives.

Every norm here is a maximum of ratios over the simplex tuples of a grid, so
the reported numbers are lower bounds of the true suprema.  They are
non-decreasing under dyadic refinement because refined grids contain the
coarse tuples.

Two input conventions are supported:

* ``kind="path"``: ``f(t, *upper)`` is a two-parameter path and the norm
  acts on increments ``f(t, *upper) - f(s, *upper)``;
* ``kind="delta"``: ``f(s, t, *upper)`` is already a function on the
  simplex (a remainder, say) and is evaluated directly.

Tensor values are measured in the max-abs norm.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _backend
from .errors import ValidationError
from .grid import TimeGrid, simplex_indices

DEFAULT_ETAS = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_ZETA_FRACTIONS = (0.0, 0.25, 0.5, 0.75)
INF_SENTINEL = 1e12

CSV_HEADER = ("family", "part", "value", "s", "u", "t", "tau1", "tau2", "eta", "zeta")


@dataclass(frozen=True)
class NormParams:
    """Exponents and sweeps for the weighted norms.

    ``zeta_fractions`` are multiplied by ``rho`` so that shifted exponent
    pairs keep a valid sweep; pass ``zetas`` to fix absolute values.
    """

    alpha: float
    gamma: float
    eta_sweep: tuple = DEFAULT_ETAS
    zeta_fractions: tuple = DEFAULT_ZETA_FRACTIONS
    zetas: Optional[tuple] = None

    def __post_init__(self):
        if not self.gamma >= 0.0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}", "norm.gamma>=0")
        if not self.rho > 0.0:
            raise ValidationError(f"rho = alpha - gamma must be > 0, got {self.rho}", "norm.rho>0")
        if any(not 0.0 <= e <= 1.0 for e in self.eta_sweep) or not self.eta_sweep:
            raise ValidationError("eta sweep must be a non-empty subset of [0, 1]", "norm.eta_range")
        if any(not 0.0 <= z < self.rho for z in self.zeta_sweep) or not self.zeta_sweep:
            raise ValidationError("zeta sweep must be a non-empty subset of [0, rho)", "norm.zeta<rho")

    @property
    def rho(self) -> float:
        return self.alpha - self.gamma

    @property
    def zeta_sweep(self) -> tuple:
        if self.zetas is not None:
            return tuple(float(z) for z in self.zetas)
        return tuple(float(f) * self.rho for f in self.zeta_fractions)

    def shifted(self, alpha: float, gamma: float) -> "NormParams":
        """Same sweeps at a different exponent pair (absolute zetas are dropped)."""
        return NormParams(alpha, gamma, self.eta_sweep, self.zeta_fractions)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "gamma": self.gamma, "rho": self.rho,
                "eta_sweep": list(self.eta_sweep), "zeta_sweep": list(self.zeta_sweep)}


@dataclass
class NormReport:
    """Result of a norm sweep.

    ``parts`` maps part names (``"1,2"``, ``"1,2,>"``, ...) to their maxima;
    ``attaining`` maps every part, including ``"1"``, to a record
    ``{"tuple": {...}, "eta": .., "zeta": ..}`` of the first maximizing tuple.
    """

    family: str
    norm_1: float
    parts: dict
    attaining: dict
    level: Optional[int]
    params: NormParams
    n_tuples: dict = field(default_factory=dict)

    @property
    def norm_12(self) -> float:
        return float(sum(self.parts.values()))

    @property
    def total(self) -> float:
        return float(self.norm_1 + self.norm_12)

    def to_dict(self) -> dict:
        return {"family": self.family, "norm_1": _jsonable(self.norm_1), "norm_12": _jsonable(self.norm_12),
                "total": _jsonable(self.total), "parts": {k: _jsonable(v) for k, v in self.parts.items()},
                "attaining": self.attaining, "level": self.level, "params": self.params.to_dict(),
                "n_tuples": self.n_tuples}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self) -> list:
        rows = []
        for part, value in [("1", self.norm_1)] + list(self.parts.items()):
            rec = self.attaining.get(part, {})
            tup = rec.get("tuple", {})
            rows.append([self.family, part, _fmt(value), _fmt(tup.get("s")), _fmt(tup.get("u")), _fmt(tup.get("t")),
                         _fmt(tup.get("tau1")), _fmt(tup.get("tau2")), _fmt(rec.get("eta")), _fmt(rec.get("zeta"))])
        return rows


def _jsonable(v):
    return "inf" if math.isinf(v) else float(v)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(reports: Sequence[NormReport], stream=None) -> str:
    """Serialize reports as ``family,part,value,s,u,t,tau1,tau2,eta,zeta`` rows."""
    buf = io.StringIO() if stream is None else stream
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rep in reports:
        w.writerows(rep.csv_rows())
    return buf.getvalue() if stream is None else ""


# --------------------------------------------------------------------------
# evaluation helpers
# --------------------------------------------------------------------------

def _evaluate(fn: Callable, args: Sequence[np.ndarray], vectorized: bool) -> np.ndarray:
    """Evaluate ``fn`` on columns ``args`` and return a ``(K, -1)`` array."""
    K = args[0].shape[0] if args else 0
    if K == 0:
        return np.zeros((0, 1))
    if vectorized:
        out = np.asarray(fn(*args), dtype=float)
        return out.reshape(K, -1)
    cache: dict = {}
    rows = []
    for row in zip(*(a.tolist() for a in args)):
        if row not in cache:
            cache[row] = np.asarray(fn(*row), dtype=float).ravel()
        rows.append(cache[row])
    return np.stack(rows)


def _values(fn, kind, s, t, uppers, vectorized):
    """Evaluate the path increment or the simplex function at ``(s, t, *uppers)``."""
    if kind == "path":
        return _evaluate(fn, [t] + list(uppers), vectorized) - _evaluate(fn, [s] + list(uppers), vectorized)
    if kind == "delta":
        return _evaluate(fn, [s, t] + list(uppers), vectorized)
    raise ValidationError(f"unknown norm input kind {kind!r}", "norm.kind")


def _size(v: np.ndarray) -> np.ndarray:
    if v.shape[0] == 0:
        return np.zeros(0)
    out = np.max(np.abs(v), axis=1)
    # non-finite input is reported through the +inf sentinel
    return np.where(np.isfinite(out), out, np.inf)


def _cap(x: float) -> float:
    return math.inf if (not math.isfinite(x) or x > INF_SENTINEL) else float(x)


def _ratio_1(values, b, c, e, params):
    if values.size == 0:
        return 0.0, -1
    m, i = _backend.core.max_ratio_1(*(np.ascontiguousarray(v, dtype=float) for v in (values, b, c, e)),
                                     float(params.alpha), float(params.gamma))
    return _cap(m), int(i)


def _ratio_h(values, a, b, c, e, params):
    if values.size == 0:
        return 0.0, -1, -1, -1
    m, i, ie, iz = _backend.core.max_ratio_h(*(np.ascontiguousarray(v, dtype=float) for v in (values, a, b, c, e)),
                                             float(params.alpha), float(params.gamma),
                                             np.asarray(params.eta_sweep, dtype=float),
                                             np.asarray(params.zeta_sweep, dtype=float))
    return _cap(m), int(i), int(ie), int(iz)


def _grid_points(grid: TimeGrid) -> np.ndarray:
    return np.asarray(grid.points, dtype=float)


def _norm_1(fn, kind, pts, params, nup, vectorized):
    """Sweep ``(s, t, tau)`` with ``s < t <= tau`` and all upper arguments equal to ``tau``."""
    idx = simplex_indices(pts.size, 3, allow_boundary=True)
    s, t, tau = (pts[idx[:, i]] for i in range(3))
    vals = _size(_values(fn, kind, s, t, [tau] * nup, vectorized))
    m, i = _ratio_1(vals, tau - t, t - s, tau - s, params)
    rec = {}
    if i >= 0:
        rec = {"tuple": {"s": float(s[i]), "t": float(t[i]), "tau1": float(tau[i]), "tau2": float(tau[i])},
               "eta": None, "zeta": None}
    return m, rec, int(idx.shape[0])


def _h_part(vals, tuples, params, lo, hi, fixed, m_upper):
    """Maximize ``vals / h`` where ``lo < hi`` are the moving arguments and ``m_upper`` the smallest upper one."""
    s, t = tuples["s"], tuples["t"]
    m, i, ie, iz = _ratio_h(vals, hi - lo, m_upper - t, t - s, m_upper - s, params)
    rec = {}
    if i >= 0:
        rec = {"tuple": {"s": float(s[i]), "t": float(t[i]), "tau1": float(lo[i]), "tau2": float(hi[i]),
                         "u": ";".join(repr(float(f[i])) for f in fixed)},
               "eta": params.eta_sweep[ie], "zeta": params.zeta_sweep[iz]}
    return m, rec


# --------------------------------------------------------------------------
# public norms
# --------------------------------------------------------------------------

def volterra_norm(f: Callable, params: NormParams, grid: TimeGrid, kind: str = "path",
                  vectorized: bool = True, family: str = "volterra") -> NormReport:
    """``(1-norm, (1,2)-norm)`` of a Volterra path or of a function on the 3-simplex.

    ``kind="path"``: ``f(t, tau)``; ``kind="delta"``: ``f(s, t, tau)``.
    The (1,2) part sweeps ``s < t < tau' < tau``; tuples with ``tau' = t``
    are left out because the weight degenerates there.
    """
    pts = _grid_points(grid)
    n1, rec1, k1 = _norm_1(f, kind, pts, params, 1, vectorized)
    idx = simplex_indices(pts.size, 4)
    s, t, tp, tau = (pts[idx[:, i]] for i in range(4))
    vals = _size(_values(f, kind, s, t, [tau], vectorized) - _values(f, kind, s, t, [tp], vectorized))
    m12, rec12 = _h_part(vals, {"s": s, "t": t}, params, tp, tau, (), tp)
    return NormReport(family, n1, {"1,2": m12}, {"1": rec1, "1,2": rec12}, grid.level, params,
                      {"1": k1, "1,2": int(idx.shape[0])})


def _w2_parts(u, kind, pts, params, vectorized):
    idx = simplex_indices(pts.size, 5)
    s, t, x1, x2, x3 = (pts[idx[:, i]] for i in range(5))
    tuples = {"s": s, "t": t}
    out, recs = {}, {}
    # ">" part: (s, t, r1, r2, r') with the second argument moving below r'
    v = _size(_values(u, kind, s, t, [x3, x2], vectorized) - _values(u, kind, s, t, [x3, x1], vectorized))
    out["1,2,>"], recs["1,2,>"] = _h_part(v, tuples, params, x1, x2, (x3,), x1)
    # "<" part: (s, t, r', r1, r2) with the first argument moving above r'
    v = _size(_values(u, kind, s, t, [x3, x1], vectorized) - _values(u, kind, s, t, [x2, x1], vectorized))
    out["1,2,<"], recs["1,2,<"] = _h_part(v, tuples, params, x2, x3, (x1,), x1)
    return out, recs, int(idx.shape[0])


def _w3_layouts():
    """Argument assignments on sorted values ``x1 < x2 < x3 < x4`` keeping ``tau1 >= tau2 >= tau3``.

    Each entry is ``(moving slot, (lo, hi) positions, {fixed slot: position})``.
    Under this ordering a moving slot has a single admissible window, so the
    (1,3) parts coincide numerically with a (1,2) or (2,3) part.
    """
    return {
        # fixed tau1 = x4, moving tau2 in {x2 < x3}, tau3 = x1
        "1,2,>": (1, (1, 2), {0: 3, 2: 0}),
        # moving tau1 in {x3 < x4}, fixed tau2 = x2, tau3 = x1
        "1,2,<": (0, (2, 3), {1: 1, 2: 0}),
        # fixed tau1 = x4, tau2 = x3, moving tau3 in {x1 < x2}
        "1,3,>": (2, (0, 1), {0: 3, 1: 2}),
        # moving tau1 in {x3 < x4}, tau2 = x2, fixed tau3 = x1
        "1,3,<": (0, (2, 3), {1: 1, 2: 0}),
        # tau1 = x4, fixed tau2 = x3, moving tau3 in {x1 < x2}
        "2,3,>": (2, (0, 1), {0: 3, 1: 2}),
        # tau1 = x4, moving tau2 in {x2 < x3}, fixed tau3 = x1
        "2,3,<": (1, (1, 2), {0: 3, 2: 0}),
    }


def _w3_parts(u, kind, pts, params, vectorized):
    idx = simplex_indices(pts.size, 6)
    s, t = pts[idx[:, 0]], pts[idx[:, 1]]
    xs = [pts[idx[:, 2 + i]] for i in range(4)]
    tuples = {"s": s, "t": t}
    out, recs = {}, {}
    for part, (slot, (lo_pos, hi_pos), fixed) in _w3_layouts().items():
        def args(pos):
            a = [None, None, None]
            a[slot] = xs[pos]
            for sl, p in fixed.items():
                a[sl] = xs[p]
            return a

        v = _size(_values(u, kind, s, t, args(hi_pos), vectorized) - _values(u, kind, s, t, args(lo_pos), vectorized))
        fixed_vals = tuple(xs[p] for _, p in sorted(fixed.items()))
        out[part], recs[part] = _h_part(v, tuples, params, xs[lo_pos], xs[hi_pos], fixed_vals, xs[0])
    return out, recs, int(idx.shape[0])


def w_norm(u: Callable, order: int, params: NormParams, grid: TimeGrid, kind: str = "path",
           vectorized: bool = True, family: str = "") -> NormReport:
    """Norms of functions with two (``order=2``) or three (``order=3``) upper arguments.

    ``kind="path"``: ``u(t, *upper)``; ``kind="delta"``: ``u(s, t, *upper)``.
    Upper arguments are listed in non-increasing order.  The 1-norm reads
    the diagonal ``u^{tau,...,tau}``; the mixed parts follow the ``>``/``<``
    split where the moving argument lies below/above its fixed partner.
    """
    if order not in (2, 3):
        raise ValidationError("w_norm order must be 2 or 3", "norm.order")
    pts = _grid_points(grid)
    n1, rec1, k1 = _norm_1(u, kind, pts, params, order, vectorized)
    parts_fn = _w2_parts if order == 2 else _w3_parts
    parts, recs, k = parts_fn(u, kind, pts, params, vectorized)
    recs["1"] = rec1
    return NormReport(family or f"W{order}", n1, parts, recs, grid.level, params, {"1": k1, "mixed": k})


def controlled_norm(sig, y, params: NormParams, grid: TimeGrid, detail: bool = False):
    """Sum of the norms of ``y_cherry``, ``y_pair``, ``R^y`` and ``R^dot``.

    ``y_cherry`` and ``y_pair`` carry three upper arguments and are measured
    with the order-3 norm; ``R^y`` uses the shifted pair
    ``(3 rho + 3 gamma, 3 gamma)`` and ``R^dot`` the pair ``(2 rho + 2 gamma, 2 gamma)``.
    Returns the total, or ``(total, reports)`` with ``detail``.
    """
    from .controlled import remainder_dot, remainder_y

    rho, gamma = params.rho, params.gamma
    reports = {}
    if y.has_cherry:
        reports["cherry"] = w_norm(y.y_cherry, 3, params, grid, family="y_cherry")
    if y.has_pair:
        reports["pair"] = w_norm(y.y_pair, 3, params, grid, family="y_pair")
    p3 = params.shifted(3 * rho + 3 * gamma, 3 * gamma)
    reports["R_y"] = volterra_norm(lambda s, t, tau: remainder_y(sig, y, s, t, tau), p3, grid, kind="delta",
                                   vectorized=False, family="R_y")
    p2 = params.shifted(2 * rho + 2 * gamma, 2 * gamma)
    reports["R_dot"] = w_norm(lambda s, t, tau, p: remainder_dot(sig, y, s, t, tau, p), 2, p2, grid, kind="delta",
                              vectorized=False, family="R_dot")
    total = float(sum(r.total for r in reports.values()))
    return (total, reports) if detail else total


# --------------------------------------------------------------------------
# embedding audits
# --------------------------------------------------------------------------

def min_form(b, c, e, alpha, gamma, zeta=0.0):
    """``[b**(-gamma-zeta) c**alpha] ^ e**(alpha-gamma-zeta)`` with ``b == 0`` keeping the second branch."""
    return _backend.python._min_form(np.asarray(b, dtype=float), np.asarray(c, dtype=float),
                                     np.asarray(e, dtype=float), alpha, gamma, zeta)


def _tuple_weights(pts, params, zetas):
    """Weights of the 1-norm on ``s < t <= tau`` and of the (1,2) part on ``s < t < tau' < tau``."""
    i3 = simplex_indices(pts.size, 3, allow_boundary=True)
    s, t, tau = (pts[i3[:, i]] for i in range(3))
    w1 = min_form(tau - t, t - s, tau - s, params.alpha, params.gamma)
    i4 = simplex_indices(pts.size, 4)
    s, t, tp, tau = (pts[i4[:, i]] for i in range(4))
    a, b = tau - tp, tp - t
    w12 = [a**eta * b ** (z - eta) * min_form(b, t - s, tp - s, params.alpha, params.gamma, z)
           for z in zetas for eta in params.eta_sweep]
    return w1, np.stack(w12)


@dataclass
class EmbeddingAudit:
    """Both sides of the embedding inequality plus the per-tuple checks.

    ``lhs`` is the coarse norm, ``rhs`` is ``T**(alpha - beta)`` times the
    fine norm.  ``violations`` counts tuples whose coarse ratio exceeds the
    bound.  ``chain`` holds the inclusion-chain comparison.
    """

    lhs: float
    rhs: float
    factor: float
    violations: int
    n_checked: int
    chain: dict

    @property
    def holds(self) -> bool:
        return self.violations == 0 and self.lhs <= self.rhs * (1 + 1e-12) + 1e-300

    def to_dict(self) -> dict:
        return {"lhs": _jsonable(self.lhs), "rhs": _jsonable(self.rhs), "factor": self.factor,
                "violations": self.violations, "n_checked": self.n_checked, "holds": self.holds,
                "chain": self.chain}


def weight_domination(pts, strong: NormParams, weak: NormParams, const: float = 1.0):
    """Count tuples where ``weight_strong > const * weight_weak``.

    ``strong`` is the space claimed to sit inside ``weak``: membership in the
    strong space implies the weak one on a tuple exactly when the strong
    weight is at most ``const`` times the weak weight.  Zetas are shared and
    taken from the sweep of the pair with the smaller ``rho``.
    Returns ``(violations, n_checked, worst_factor)`` where ``worst_factor``
    is the smallest constant that would make every tuple pass.
    """
    zetas = weak.zeta_sweep if weak.rho <= strong.rho else strong.zeta_sweep
    ws1, ws12 = _tuple_weights(pts, strong, zetas)
    ww1, ww12 = _tuple_weights(pts, weak, zetas)
    ratio = np.concatenate([(ws1 / ww1).ravel(), (ws12 / ww12).ravel()])
    ratio = ratio[np.isfinite(ratio)]
    viol = int(np.count_nonzero(ratio > const * (1 + 1e-12)))
    worst = float(ratio.max()) if ratio.size else 0.0
    return viol, int(ratio.size), worst


def inclusion_chain_audit(grid: TimeGrid, rho: float, gamma: float, params: Optional[NormParams] = None) -> dict:
    """Per-tuple weight comparison along ``(3 rho + j gamma, j gamma)`` for ``j = 1, 2, 3``.

    For each stated inclusion ``V_j ⊂ V_{j+1}`` the forward check asks the
    ``V_{j+1}`` weight to dominate the ``V_j`` weight with constant one;
    the reverse check is reported alongside.
    """
    base = params or NormParams(rho + gamma, gamma)
    spaces = [base.shifted(3 * rho + j * gamma, j * gamma) for j in (1, 2, 3)]
    pts = _grid_points(grid)
    out = {}
    for j in range(2):
        small, big = spaces[j], spaces[j + 1]
        # norm_big <= norm_small per tuple iff weight_small <= weight_big
        fv, fn, fw = weight_domination(pts, small, big)
        rv, rn, rw = weight_domination(pts, big, small)
        key = f"({small.alpha:g},{small.gamma:g})<=({big.alpha:g},{big.gamma:g})"
        out[key] = {"forward_violations": fv, "forward_checked": fn, "forward_constant": fw,
                    "reverse_violations": rv, "reverse_checked": rn, "reverse_constant": rw}
    return out


def embedding_audit(f: Callable, fine: NormParams, coarse: NormParams, grid: TimeGrid, kind: str = "path",
                    vectorized: bool = True, chain: bool = True) -> EmbeddingAudit:
    """Check ``||f||_(beta, gamma) <= T**(alpha - beta) ||f||_(alpha, gamma)`` on ``grid``.

    ``fine`` carries ``(alpha, gamma)`` and ``coarse`` carries ``(beta, gamma)``.
    Besides the two norm values, every tuple is checked through the weight
    domination ``w_alpha <= T**(alpha - beta) w_beta`` with the coarse zetas.
    """
    if not coarse.alpha <= fine.alpha or abs(coarse.gamma - fine.gamma) > 0 or not coarse.rho > 0:
        raise ValidationError("embedding needs beta <= alpha, a shared gamma and beta - gamma > 0",
                              "embedding.exponents")
    span = float(grid.T - grid.start)
    factor = span ** (fine.alpha - coarse.alpha)
    lhs = volterra_norm(f, coarse, grid, kind, vectorized).total
    rhs = factor * volterra_norm(f, NormParams(fine.alpha, fine.gamma, fine.eta_sweep, zetas=coarse.zeta_sweep),
                                 grid, kind, vectorized).total
    viol, n, _ = weight_domination(_grid_points(grid), fine, coarse, const=factor)
    chain_rep = inclusion_chain_audit(grid, fine.rho, fine.gamma, fine) if chain and fine.gamma > 0 else {}
    return EmbeddingAudit(lhs, rhs, factor, viol, n, chain_rep)
