"""Rough-path calculus for Volterra equations with singular kernels.

Typical use::

    from volterra_rough import make_kernel, trig, VolterraSignature, builtin_function, SolverOptions, solve

    sig = VolterraSignature(make_kernel("fractional", 0.25), trig(1.0, [1.0, 0.0], [0.0, 1.0], [1.0, 2.0]))
    trace = solve(sig, builtin_function("sin", m=1, d=2), [0.0], 1.0, SolverOptions(alpha=0.8, gamma=0.25))
"""

from ._version import __version__
from .controlled import (ControlledPath, SmoothFunction, builtin_function, canonical_lift, compose, constant_lift,
                         conv1, conv2, conv3, conv_pair, tau_constant_lift)
from .driver import DrivingPath, linear, piecewise_linear, sample_fbm, trig
from .errors import (ExponentError, NoConvergence, NonCauchy, NumericalError, StepUnderflow, ValidationError,
                     VolterraRoughError)
from .grid import TimeGrid, dyadic_partition
from .integrator import integrate_to_controlled, rough_integral
from .kernel import Kernel, audit_bounds, make_kernel
from .norms import NormParams, controlled_norm, volterra_norm, w_norm
from .sewing import SewingExponents, sew_double, sew_single
from .signature import TreeSymbol, VolterraSignature
from .solver import SolutionTrace, SolverOptions, choose_step, picard_map, solve

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
