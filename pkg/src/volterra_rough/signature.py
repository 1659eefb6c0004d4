"""Tree-indexed Volterra signature above a bounded-variation driver.

For a kernel ``k`` and driver ``x`` the five symbols are

* ``dot``     z^{.,tau}_{ts}   = int_s^t k(tau, r1) dx_{r1}
* ``cherry``  z^{[.],tau}_{ts} = int_s^t k(tau, r1) dx_{r1} (x) z^{., r1}_{r1 s}
* ``chain3``  z^{[[.]],tau}_{ts} = int_s^t k(tau, r1) dx_{r1} (x) z^{[.], r1}_{r1 s}
* ``vee``     z^{[..],tau}_{ts} = int_s^t k(tau, r1) dx_{r1} (x) z^{., r1}_{r1 s} (x) z^{., r1}_{r1 s}
* ``pair``    z^{..,tau}_{ts}  = z^{.,tau}_{ts} (x) z^{.,tau}_{ts}

Tensor index 0 always belongs to the outermost integration variable.
Everything is computed by nested product quadrature (see
:mod:`volterra_rough.quadrature`) and broadcasts over arrays of times.
"""

from __future__ import annotations

import enum
import json
import threading
from typing import Callable, Optional

import numpy as np

from .driver import DrivingPath
from .errors import DriverError, GridError
from .grid import TimeGrid, simplex_iter
from .kernel import Kernel
from .quadrature import QuadratureSpec, has_exact_level1, level1_exact, stieltjes_rule

_ORDER_TOL = 1e-12
# cap on quadrature points times tensor entries held at once by batched calls
_BATCH_BUDGET = 4_000_000
# one evaluation may not exceed this many quadrature points; kinked drivers multiply the count per level
_WORK_CAP = 6 * _BATCH_BUDGET  # about 1 GB peak for one value


class TreeSymbol(enum.Enum):
    DOT = ("dot", 1, "•")
    CHERRY = ("cherry", 2, "[•]")
    CHAIN3 = ("chain3", 3, "[[•]]")
    VEE = ("vee", 3, "[••]")
    PAIR = ("pair", 2, "••")

    def __init__(self, key, vertices, glyph):
        self.key = key
        self.vertices = vertices
        self.glyph = glyph

    @classmethod
    def parse(cls, name) -> "TreeSymbol":
        if isinstance(name, cls):
            return name
        for sym in cls:
            if name in (sym.key, sym.glyph, sym.name):
                return sym
        raise ValueError(f"unknown tree symbol {name!r}")


def outer(a: np.ndarray, b: np.ndarray, ndim_a: int = 1) -> np.ndarray:
    """Tensor product over trailing axes, broadcasting the leading ones."""
    a = np.asarray(a)
    b = np.asarray(b)
    nb = b.ndim - (a.ndim - ndim_a)
    a_exp = a.reshape(a.shape + (1,) * max(nb, 0))
    b_exp = b.reshape(b.shape[: b.ndim - nb] + (1,) * ndim_a + b.shape[b.ndim - nb:])
    return a_exp * b_exp


class VolterraSignature:
    """Signature of ``path`` against ``kernel`` with a memo table.

    Values at master-grid points are cached under ``(symbol, i_s, i_t, i_tau)``.
    The cache is safe for concurrent readers; duplicate fills compute the
    same value and the last write wins.
    """

    def __init__(self, kernel: Kernel, path: DrivingPath, quad: QuadratureSpec | None = None,
                 grid: TimeGrid | None = None):
        self.kernel = kernel
        self.path = path
        self.quad = quad or QuadratureSpec()
        self.grid = grid
        self.d = path.dim
        self.T = path.T
        self._cache: dict = {}
        self._lock = threading.Lock()
        self._exact = has_exact_level1(path, kernel)

    # ------------------------------------------------------------------ core
    def kint(self, lo, hi, tau, F: Optional[Callable] = None, depth: int = 0, contract: bool = False) -> np.ndarray:
        """``int_lo^hi k(tau, r) dx_r (x) F(r)`` broadcast over ``(lo, hi, tau)``.

        ``F(r, depth)`` receives the quadrature nodes (shape ``S + (n,)``) and
        returns ``S + (n,) + V``.  In tensor mode the result has shape
        ``S + (d,) + V``.  With ``contract`` the new ``d`` index is summed
        against the last axis of ``V`` instead, giving ``S + V[:-1]``.
        ``F = None`` integrates the constant 1.
        """
        h = self.quad.step(depth)
        r, W = stieltjes_rule(self.path, self.kernel, lo, hi, tau, h, self.quad.umax)
        if F is None:
            return W.sum(axis=-2)
        vals = np.asarray(F(r, depth + 1), dtype=float)
        lead = r.shape
        vals = np.broadcast_to(vals, lead + vals.shape[len(lead):])
        tail = vals.shape[len(lead):]
        if contract:
            if not tail or tail[-1] != self.d:
                raise ValueError(f"cannot contract a value of shape {tail} against dx in R^{self.d}")
            flat = vals.reshape(lead + (-1, self.d))
            out = np.einsum("...na,...npa->...p", W, flat)
            return out.reshape(lead[:-1] + tail[:-1])
        flat = vals.reshape(lead + (-1,))
        out = np.einsum("...na,...np->...ap", W, flat)
        return out.reshape(lead[:-1] + (self.d,) + tail)

    def _l1(self, s, t, tau, depth):
        if self._exact:
            return level1_exact(self.path, self.kernel, s, t, tau)
        return self.kint(s, t, tau, None, depth)

    def _l2(self, s, t, tau, depth):
        s_ = np.asarray(s, dtype=float)[..., None]
        return self.kint(s, t, tau, lambda r, dp: self._l1(s_, r, r, dp), depth)

    def _chain3(self, s, t, tau, depth):
        s_ = np.asarray(s, dtype=float)[..., None]
        return self.kint(s, t, tau, lambda r, dp: self._l2(s_, r, r, dp), depth)

    def _vee(self, s, t, tau, depth):
        s_ = np.asarray(s, dtype=float)[..., None]

        def leaves(r, dp):
            g = self._l1(s_, r, r, dp)
            return g[..., :, None] * g[..., None, :]

        return self.kint(s, t, tau, leaves, depth)

    def _pair(self, s, t, tau, depth):
        g = self._l1(s, t, tau, depth)
        return g[..., :, None] * g[..., None, :]

    _DISPATCH = {
        TreeSymbol.DOT: "_l1",
        TreeSymbol.CHERRY: "_l2",
        TreeSymbol.CHAIN3: "_chain3",
        TreeSymbol.VEE: "_vee",
        TreeSymbol.PAIR: "_pair",
    }

    def _points_per_eval(self, sym: TreeSymbol) -> int:
        n0 = int(2 * np.ceil(self.quad.umax / self.quad.h) + 1)
        n1 = int(2 * np.ceil(self.quad.umax / self.quad.h_inner) + 1)
        segs = self.path.times.size if self.path.is_piecewise_linear else 1
        depth = {1: 1, 2: 2, 3: 3}[sym.vertices] if sym is not TreeSymbol.PAIR else 1
        levels = [n0 * segs] + [n1 * segs] * (depth - 1)
        if self._exact:
            levels[-1] = segs  # closed-form level 1 touches each segment once
        return int(np.prod(levels)) * self.d ** sym.vertices

    # ------------------------------------------------------------ public API
    def check_times(self, s, t, tau):
        s, t, tau = (np.asarray(v, dtype=float) for v in (s, t, tau))
        tol = _ORDER_TOL * max(self.T, 1.0)
        if np.any(s > t + tol) or np.any(t > tau + tol):
            raise GridError("signature arguments must satisfy s <= t <= tau", "signature.order")
        if np.any(s < -tol) or np.any(tau > self.T + tol):
            raise GridError(f"signature arguments must lie in [0, {self.T}]", "signature.range")

    def values(self, sigma, s, t, tau) -> np.ndarray:
        """Batched evaluation without caching; shape ``broadcast(s, t, tau) + (d,)*|sigma|``."""
        sym = TreeSymbol.parse(sigma)
        s, t, tau = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, t, tau)))
        self.check_times(s, t, tau)
        fn = getattr(self, self._DISPATCH[sym])
        per_eval = self._points_per_eval(sym)
        if per_eval > _WORK_CAP:
            raise DriverError(
                f"{sym.key} on a piecewise-linear path with {self.path.times.size} samples needs about "
                f"{per_eval:.1e} quadrature points per value (cap {_WORK_CAP:.1e}); use fewer samples",
                "signature.work")
        flat = [v.reshape(-1) for v in (s, t, tau)]
        chunk = max(1, _BATCH_BUDGET // max(per_eval, 1))
        parts = [fn(flat[0][i:i + chunk], flat[1][i:i + chunk], flat[2][i:i + chunk], 0)
                 for i in range(0, flat[0].size, chunk)]
        out = np.concatenate(parts, axis=0) if parts else np.zeros((0,) + (self.d,) * sym.vertices)
        return out.reshape(s.shape + (self.d,) * sym.vertices)

    def _key(self, sym, s, t, tau):
        if self.grid is None:
            return None
        idx = tuple(self.grid.index_of(v) for v in (s, t, tau))
        if any(i is None for i in idx):
            return None
        return (sym.key,) + idx

    def value(self, sigma, s: float, t: float, tau: float) -> np.ndarray:
        """Single evaluation, memoized when all three times are master-grid points."""
        sym = TreeSymbol.parse(sigma)
        key = self._key(sym, s, t, tau)
        if key is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        out = self.values(sym, s, t, tau)
        out.setflags(write=False)
        if key is not None:
            with self._lock:
                self._cache[key] = out
        return out

    def cache_size(self) -> int:
        return len(self._cache)

    def dump(self, sigmas=("dot", "cherry", "chain3", "vee", "pair"), grid: TimeGrid | None = None) -> list:
        """JSON-ready records ``{sigma, s, t, tau, tensor}`` over all grid tuples ``s < t <= tau``."""
        grid = grid or self.grid
        records = []
        for sigma in sigmas:
            sym = TreeSymbol.parse(sigma)
            for tup in simplex_iter(grid, 3, allow_boundary=True):
                s, t, tau = tup.coords
                val = self.value(sym, s, t, tau)
                records.append({"sigma": sym.key, "s": s, "t": t, "tau": tau,
                                "shape": list(val.shape), "tensor": val.ravel().tolist()})
        return records


def level1(sig: VolterraSignature, s: float, t: float, tau: float) -> np.ndarray:
    """``z^{.,tau}_{ts}``, a vector in R^d."""
    return sig.value(TreeSymbol.DOT, s, t, tau)


def level_sigma(sig: VolterraSignature, sigma, s: float, t: float, tau: float) -> np.ndarray:
    """``z^{sigma,tau}_{ts}`` with shape ``(d,) * |sigma|``."""
    return sig.value(sigma, s, t, tau)


def chen_defect(sig: VolterraSignature, sigma, s: float, u: float, t: float, tau: float) -> np.ndarray:
    """``delta_u z^{sigma,tau}_{ts} = z_{ts} - z_{tu} - z_{us}``."""
    return sig.value(sigma, s, t, tau) - sig.value(sigma, u, t, tau) - sig.value(sigma, s, u, tau)


def chen_rhs(sig: VolterraSignature, sigma, s: float, u: float, t: float, tau: float) -> np.ndarray:
    """Right side of the Chen relation, built from convolution products.

    * cherry: ``z^.(tau)_{tu} * z^{., .}_{us}``
    * chain3: ``z^{[.]}_{tu} * z^{., .}_{us} + z^._{tu} * z^{[.], .}_{us}``
    * vee: ``2 z^{[.]}_{tu} * z^{., root}_{us}`` (symmetrized over the leaves)
      ``+ z^._{tu} * (z^{., .}_{us})^{(x)2}``
    """
    from . import controlled as ctl

    sym = TreeSymbol.parse(sigma)

    def l1_us(r):
        return sig._l1(np.full(np.shape(r), s), np.full(np.shape(r), u), r, 1)

    def l2_us(r):
        return sig._l2(np.full(np.shape(r), s), np.full(np.shape(r), u), r, 1)

    if sym is TreeSymbol.CHERRY:
        return ctl.conv1(sig, s, u, t, tau, l1_us)
    if sym is TreeSymbol.CHAIN3:
        a = ctl.conv2(sig, u, t, tau, lambda r1, r2: l1_us(np.broadcast_to(r2, np.broadcast(r1, r2).shape)))
        b = ctl.conv1(sig, s, u, t, tau, l2_us)
        return a + b
    if sym is TreeSymbol.VEE:
        x = ctl.conv2(sig, u, t, tau, lambda r1, r2: l1_us(np.broadcast_to(r1, np.broadcast(r1, r2).shape)))
        sq = ctl.conv1(sig, s, u, t, tau, lambda r: (lambda g: g[..., :, None] * g[..., None, :])(l1_us(r)))
        return x + np.swapaxes(x, 1, 2) + sq
    raise ValueError(f"no Chen relation audited for {sym.key}")


def chen_residual(sig: VolterraSignature, sigma, s: float, u: float, t: float, tau: float) -> float:
    """Max-norm of ``delta_u z^sigma - (convolution right side)`` for ``s < u < t <= tau``."""
    if not (s < u < t <= tau):
        raise GridError("chen_residual needs s < u < t <= tau", "chen.order")
    diff = chen_defect(sig, sigma, s, u, t, tau) - chen_rhs(sig, sigma, s, u, t, tau)
    return float(np.max(np.abs(diff)))


def chen_audit(sig: VolterraSignature, grid: TimeGrid, sigmas=("cherry", "chain3", "vee")) -> list:
    """Residual rows ``(sigma, s, u, t, tau, residual)`` over all grid tuples ``s < u < t <= tau``."""
    rows = []
    for sigma in sigmas:
        sym = TreeSymbol.parse(sigma)
        for tup in simplex_iter(grid, 4, allow_boundary=True):
            s, u, t, tau = tup.coords
            rows.append((sym.key, s, u, t, tau, chen_residual(sig, sym, s, u, t, tau)))
    return rows


def dump_json(records: list) -> str:
    return json.dumps(records)
