"""Exception hierarchy.

Validation failures map to CLI exit code 2 and numerical failures to exit
code 3.  Every exception carries a short ``constraint`` string naming the
violated condition so it can be serialized into the CLI error JSON.
"""

from __future__ import annotations


class VolterraRoughError(Exception):
    """Base class for all package errors."""

    exit_code = 1

    def __init__(self, message: str, constraint: str | None = None):
        super().__init__(message)
        self.constraint = constraint or type(self).__name__

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "kind": "validation" if self.exit_code == 2 else "numerical",
            "constraint": self.constraint,
            "message": str(self),
        }


class ValidationError(VolterraRoughError, ValueError):
    """Bad input: wrong ranges, inconsistent shapes, malformed config."""

    exit_code = 2


class GridError(ValidationError):
    pass


class KernelError(ValidationError):
    pass


class DriverError(ValidationError):
    pass


class ExponentError(ValidationError):
    """Exponent constraints such as 4*rho + gamma > 1 are violated."""


class DerivativeMismatch(ValidationError):
    """A user supplied derivative disagrees with finite differences."""


class InitialBundleMismatch(ValidationError):
    """A controlled path does not start from the required initial bundle."""


class SingularBase(ValidationError):
    """Double-singularity sewing requested with base v = s and theta >= 1."""


class ConfigError(ValidationError):
    pass


class NumericalError(VolterraRoughError, ArithmeticError):
    """A computation ran but failed to produce a trustworthy number."""

    exit_code = 3


class NonCauchy(NumericalError):
    """Dyadic Riemann sums do not contract."""


class Overflow(NumericalError):
    """Non-finite values met during sewing or quadrature."""


class QuadratureNotConverged(NumericalError):
    pass


class NoConvergence(NumericalError):
    """Picard iteration failed even after shrinking the step."""


class StepUnderflow(NumericalError):
    """The selected step fell below the underflow threshold."""
