"""Volterra kernels and a numerical audit of the kernel bounds.

Every kernel is stored in factorized form

    k(tau, r) = (tau - r) ** (-power) * regular(tau, r)

with ``regular`` smooth up to the diagonal.  The quadrature engine only
needs ``power`` and ``regular`` and absorbs the algebraic singularity
exactly through a change of variables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend
from .errors import KernelError
from .grid import TimeGrid

FAMILIES = ("fractional", "constant", "damped_fractional")
_FAMILY_CODE = {"fractional": 0, "constant": 1, "damped_fractional": 2}
DEFAULT_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)


def _one(tau, r):
    return np.ones(np.broadcast(np.asarray(tau), np.asarray(r)).shape)


def _damping(tau, r):
    return np.exp(-(np.asarray(tau) - np.asarray(r)))


@dataclass(frozen=True)
class Kernel:
    """A scalar Volterra kernel of order ``gamma``.

    ``gamma`` is the singularity order used in all exponent bookkeeping.
    ``power`` is the exponent of the algebraic factor actually present in
    the formula; it equals ``gamma`` except for the constant kernel, which
    is regular and may carry any order label in ``[0, 1)``.
    """

    name: str
    gamma: float
    power: float
    regular: Callable = field(repr=False, compare=False)
    primitive: Optional[Callable] = field(default=None, repr=False, compare=False)

    @property
    def family_code(self) -> int:
        return _FAMILY_CODE[self.name]

    @property
    def is_constant(self) -> bool:
        return self.name == "constant"

    def eval(self, tau, r):
        """Evaluate ``k(tau, r)`` for ``r < tau``; broadcasts over arrays."""
        tau = np.asarray(tau, dtype=float)
        r = np.asarray(r, dtype=float)
        gap = tau - r
        if self.power == 0.0:
            out = self.regular(tau, r)
        else:
            with np.errstate(divide="ignore"):
                out = gap ** (-self.power) * self.regular(tau, r)
        return out[()] if np.ndim(out) == 0 else out

    __call__ = eval

    def to_dict(self) -> dict:
        return {"family": self.name, "gamma": self.gamma}


def make_kernel(family: str, gamma: float) -> Kernel:
    """Build a kernel from its family name and singularity order.

    ``fractional`` is ``(tau - r)**-gamma`` and needs ``gamma`` in (0, 1).
    ``constant`` is ``k = 1``; ``gamma`` is only a label in [0, 1).
    ``damped_fractional`` is ``(tau - r)**-gamma * exp(-(tau - r))`` with
    ``gamma`` in [0, 1).
    """
    gamma = float(gamma)
    if family not in FAMILIES:
        raise KernelError(f"unknown kernel family {family!r}; expected one of {FAMILIES}", "kernel.family")
    if not (0.0 <= gamma < 1.0):
        raise KernelError(f"gamma must lie in [0, 1), got {gamma}", "kernel.gamma_range")
    if family == "fractional":
        if gamma == 0.0:
            raise KernelError("the fractional family needs gamma > 0; use 'constant' for gamma = 0", "kernel.gamma_range")
        g = gamma

        def primitive(tau, a, b):
            tau, a, b = (np.asarray(v, dtype=float) for v in (tau, a, b))
            return ((tau - a) ** (1 - g) - (tau - b) ** (1 - g)) / (1 - g)

        return Kernel("fractional", gamma, gamma, _one, primitive)
    if family == "constant":

        def primitive(tau, a, b):
            tau, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (tau, a, b)))
            return b - a

        return Kernel("constant", gamma, 0.0, _one, primitive)
    return Kernel("damped_fractional", gamma, gamma, _damping, None)


@dataclass
class KernelAuditReport:
    """Empirical constants for the five kernel bounds.

    ``per_exponent[i]`` maps each swept exponent to the constant of bound
    ``i`` (bounds 2, 3 and 5 sweep eta, bound 4 sweeps beta, bound 1 has no
    exponent).  ``constants[i]`` is the maximum over the sweep.
    """

    constants: list
    worst_tuples: list
    per_exponent: list
    etas: list
    betas: list
    skipped: int
    n_tuples: int

    def to_dict(self) -> dict:
        return {
            "constants": [float(c) for c in self.constants],
            "worst_tuples": [list(map(float, t)) if t is not None else None for t in self.worst_tuples],
            "per_exponent": [{str(k): float(v) for k, v in d.items()} for d in self.per_exponent],
            "etas": list(map(float, self.etas)),
            "betas": list(map(float, self.betas)),
            "skipped": int(self.skipped),
            "n_tuples": int(self.n_tuples),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def audit_bounds(k: Kernel, grid: TimeGrid, etas=DEFAULT_SWEEP, betas=DEFAULT_SWEEP) -> KernelAuditReport:
    """Sweep all grid tuples ``s < r < q < tau`` and the exponent sets.

    For each bound the ratio ``|left side| / right-side weight`` is maximized.
    Tuples with ``tau - r`` inside the diagonal exclusion band
    ``T * 2**-(level + 2)`` are skipped and counted.
    """
    etas = np.asarray(etas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if np.any((etas < 0) | (etas > 1)) or np.any((betas < 0) | (betas > 1)):
        raise KernelError("sweep exponents must lie in [0, 1]", "audit.sweep_range")
    level = grid.level if grid.level is not None else int(np.ceil(np.log2(max(len(grid) - 1, 1))))
    band = (grid.T - grid.start) * 2.0 ** (-(level + 2))
    pts = np.ascontiguousarray(grid.points, dtype=float)
    vals, idx, skipped, n_tuples = _backend.core.kernel_audit(
        k.family_code, float(k.power), float(k.gamma), pts, etas, betas, float(band))
    sweeps = [np.zeros(1), etas, etas, betas, etas]
    constants, worst, per_exp = [], [], []
    for i in range(5):
        v = np.asarray(vals[i])
        j = int(np.argmax(v)) if v.size else 0
        constants.append(float(v[j]) if v.size else 0.0)
        tup = idx[i][j]
        worst.append(tuple(float(pts[a]) for a in tup) if tup[0] >= 0 else None)
        per_exp.append({float(e): float(c) for e, c in zip(sweeps[i], v)} if i else {"-": float(v[0])})
    return KernelAuditReport(constants, worst, per_exp, etas.tolist(), betas.tolist(), int(skipped), int(n_tuples))
