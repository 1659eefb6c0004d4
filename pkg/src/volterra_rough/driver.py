"""Driving signals x: [0, T] -> R^d."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DriverError
from .grid import TimeGrid

_TIME_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DrivingPath:
    """A bounded-variation driver, either piecewise linear or analytic.

    Piecewise-linear paths interpolate ``values[k]`` at ``times[k]``.
    Analytic paths carry vectorized ``value_fn(t) -> (..., d)`` and
    ``derivative_fn(t) -> (..., d)``.
    """

    dim: int
    kind: str
    T: float
    times: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    value_fn: Optional[Callable] = field(default=None, repr=False)
    derivative_fn: Optional[Callable] = field(default=None, repr=False)
    alpha_hint: float = 1.0
    label: str = ""

    @property
    def is_piecewise_linear(self) -> bool:
        return self.kind == "piecewise_linear"

    @property
    def slopes(self) -> np.ndarray:
        """Per-segment slopes ``(n_segments, d)`` of a piecewise-linear path."""
        return np.diff(self.values, axis=0) / np.diff(self.times)[:, None]

    def _check_times(self, *ts):
        for t in ts:
            t = np.asarray(t, dtype=float)
            if np.any(t < -_TIME_TOL * max(self.T, 1.0)) or np.any(t > self.T * (1 + _TIME_TOL) + _TIME_TOL):
                raise DriverError(f"time outside [0, {self.T}]", "driver.time_range")

    def value(self, t):
        """``x_t`` with shape ``t.shape + (d,)``."""
        t = np.asarray(t, dtype=float)
        if self.is_piecewise_linear:
            tt = np.clip(t, self.times[0], self.times[-1])
            out = np.stack([np.interp(tt, self.times, self.values[:, i]) for i in range(self.dim)], axis=-1)
            return out
        return np.asarray(self.value_fn(t), dtype=float).reshape(t.shape + (self.dim,))

    def derivative(self, t):
        """``x'(t)``; for piecewise-linear paths the slope of the segment to the right of ``t``."""
        t = np.asarray(t, dtype=float)
        if self.is_piecewise_linear:
            j = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
            return self.slopes[j]
        return np.asarray(self.derivative_fn(t), dtype=float).reshape(t.shape + (self.dim,))


def piecewise_linear(times, values, alpha_hint: float = 1.0, label: str = "") -> DrivingPath:
    """Path through the samples ``(times[k], values[k])``; times must start at 0."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if times.ndim != 1 or times.size < 2 or values.shape[0] != times.size:
        raise DriverError("need at least two samples with matching times and values", "driver.samples")
    if np.any(np.diff(times) <= 0):
        raise DriverError("sample times must be strictly increasing", "driver.increasing")
    if times[0] != 0.0:
        raise DriverError("sample times must start at 0", "driver.start")
    if not np.all(np.isfinite(values)):
        raise DriverError("sample values must be finite", "driver.finite")
    times.setflags(write=False)
    values.setflags(write=False)
    return DrivingPath(values.shape[1], "piecewise_linear", float(times[-1]), times, values, alpha_hint=alpha_hint, label=label)


def analytic(value_fn: Callable, derivative_fn: Callable, dim: int, T: float, alpha_hint: float = 1.0,
             label: str = "", check: bool = True) -> DrivingPath:
    """Path given by closed-form value and derivative functions.

    With ``check`` the derivative is compared with central differences of
    ``value_fn`` on seven probe points; a mismatch above 1e-6 relative
    raises :class:`DriverError`.
    """
    if T <= 0:
        raise DriverError("horizon must be positive", "driver.T>0")
    path = DrivingPath(int(dim), "analytic", float(T), value_fn=value_fn, derivative_fn=derivative_fn,
                       alpha_hint=alpha_hint, label=label)
    if check:
        probe = np.linspace(0.1, 0.9, 7) * T
        h = 1e-5 * max(T, 1.0)
        fd = (path.value(probe + h) - path.value(probe - h)) / (2 * h)
        exact = path.derivative(probe)
        scale = np.maximum(1.0, np.abs(exact))
        if np.max(np.abs(fd - exact) / scale) > 1e-6:
            raise DriverError("derivative_fn disagrees with finite differences of value_fn", "driver.derivative")
    return path


def linear(T: float = 1.0, slope=1.0) -> DrivingPath:
    """``x_t = slope * t``."""
    slope = np.atleast_1d(np.asarray(slope, dtype=float))
    d = slope.size
    return analytic(lambda t: np.asarray(t)[..., None] * slope, lambda t: np.broadcast_to(slope, np.shape(t) + (d,)).copy(),
                    d, T, label="linear", check=False)


def trig(T: float = 1.0, sin_amp=(1.0,), cos_amp=(0.0,), omega=(1.0,), drift=(0.0,)) -> DrivingPath:
    """Componentwise ``a_i sin(w_i t) + b_i cos(w_i t) + c_i t``.

    ``trig(sin_amp=(1, 0), cos_amp=(0, 1), omega=(1, 2))`` is ``(sin t, cos 2t)``.
    """
    a, b, w, c = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (sin_amp, cos_amp, omega, drift)))
    a, b, w, c = (v.copy() for v in (a, b, w, c))

    def value(t):
        t = np.asarray(t, dtype=float)[..., None]
        return a * np.sin(w * t) + b * np.cos(w * t) + c * t

    def deriv(t):
        t = np.asarray(t, dtype=float)[..., None]
        return a * w * np.cos(w * t) - b * w * np.sin(w * t) + c

    return analytic(value, deriv, a.size, T, label="trig")


def increment(x: DrivingPath, s, t):
    """``x_t - x_s``; rejects times outside ``[0, T]``."""
    x._check_times(s, t)
    return x.value(t) - x.value(s)


def holder_norm(x: DrivingPath, alpha: float, grid: TimeGrid) -> float:
    """Max over grid pairs ``s < t`` of ``|x_t - x_s| / (t - s)**alpha`` (Euclidean norm)."""
    if not (0.0 < alpha <= 1.0):
        raise DriverError("alpha must lie in (0, 1]", "holder.alpha")
    pts = grid.points
    vals = x.value(pts)
    i, j = np.triu_indices(pts.size, k=1)
    num = np.linalg.norm(vals[j] - vals[i], axis=-1)
    den = (pts[j] - pts[i]) ** alpha
    return float(np.max(num / den)) if num.size else 0.0


def fgn_autocovariance(hurst: float, n: int) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n."""
    k = np.arange(n + 1, dtype=float)
    return 0.5 * ((k + 1) ** (2 * hurst) - 2 * k ** (2 * hurst) + np.abs(k - 1) ** (2 * hurst))


def sample_fbm(hurst: float, n: int, seed: int, T: float = 1.0, dim: int = 1) -> DrivingPath:
    """Exact-covariance fractional Brownian motion on ``n`` equal steps.

    The Cholesky factor of the Toeplitz increment covariance is applied
    through the Durbin-Levinson recursion, which costs O(n^2) time and O(n)
    memory.  Components are independent and drawn from one seeded stream.
    """
    if not (0.0 < hurst < 1.0):
        raise DriverError("hurst must lie in (0, 1)", "fbm.hurst")
    n = int(n)
    if n < 1 or n > 2**16:
        raise DriverError("n must lie in [1, 2**16]", "fbm.n")
    if T <= 0:
        raise DriverError("horizon must be positive", "fbm.T")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((dim, n))
    acov = fgn_autocovariance(hurst, n)
    incs = np.empty((dim, n))
    phi = np.zeros(0)
    var = acov[0]
    incs[:, 0] = np.sqrt(var) * z[:, 0]
    for k in range(1, n):
        kappa = (acov[k] - phi @ acov[k - 1:0:-1]) / var
        phi = np.concatenate([phi - kappa * phi[::-1], [kappa]])
        var = var * (1.0 - kappa * kappa)
        if not var > 0:
            raise DriverError(f"fBm covariance is numerically not positive definite at step {k}",
                              "fbm.positive_definite")
        incs[:, k] = incs[:, k - 1::-1] @ phi + np.sqrt(var) * z[:, k]
    scale = (T / n) ** hurst
    values = np.zeros((n + 1, dim))
    values[1:] = np.cumsum(incs.T * scale, axis=0)
    times = np.arange(n + 1, dtype=float) * (T / n)
    times[-1] = T
    return piecewise_linear(times, values, alpha_hint=hurst, label=f"fbm(H={hurst},seed={seed})")


def from_csv(path: str, alpha_hint: float = 1.0) -> DrivingPath:
    """Read ``time,value[,value...]`` rows (header row required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DriverError(f"{path}: missing header row with at least two columns", "driver.csv_header")
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise DriverError(f"{path}: ragged rows", "driver.csv_shape")
    return piecewise_linear(arr[:, 0], arr[:, 1:], alpha_hint=alpha_hint, label=path)
