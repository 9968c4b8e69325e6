from __future__ import annotations

import typing

# Base Exceptions


class JumpControlError(Exception):
    """Base exception used by this module."""


class JumpControlWarning(Warning):
    """Base warning used by this module."""


_TYPE_REDUCE_RESULT = typing.Tuple[
    typing.Callable[..., object], typing.Tuple[object, ...]
]


class DimensionError(JumpControlError, ValueError):
    """Raised when an operand has the wrong shape."""


class DomainError(JumpControlError, ValueError):
    """Raised when an input lies outside the domain of an operation."""


class AlignmentError(DomainError):
    """Raised when the control interval is not a whole number of time steps."""

    def __init__(self, delta_t: float, step: float) -> None:
        self.delta_t = delta_t
        self.step = step
        super().__init__(
            f"delta_t={delta_t!r} is not an integer multiple of the step {step!r}"
        )

    def __reduce__(self) -> _TYPE_REDUCE_RESULT:
        # For pickling purposes.
        return self.__class__, (self.delta_t, self.step)


class ConfigError(JumpControlError, ValueError):
    """Raised when a run configuration fails to parse or validate.

    :param message: Human readable summary.
    :param errors: One line per offending field or location.
    """

    def __init__(self, message: str, errors: typing.Sequence[str] = ()) -> None:
        self.errors = list(errors)
        detail = "".join(f"\n  {line}" for line in self.errors)
        super().__init__(f"{message}{detail}")
        self.message = message

    def __reduce__(self) -> _TYPE_REDUCE_RESULT:
        # For pickling purposes.
        return self.__class__, (self.message, self.errors)


class NumericalError(JumpControlError):
    """Base exception for failures of the numerical kernels."""


# Leaf Exceptions


class SingularMatrixError(NumericalError):
    """Raised when elimination meets a pivot too small to divide by."""

    def __init__(self, pivot: float, threshold: float) -> None:
        self.pivot = pivot
        self.threshold = threshold
        super().__init__(
            f"Matrix is numerically singular (pivot {pivot:.3e} below {threshold:.3e})"
        )

    def __reduce__(self) -> _TYPE_REDUCE_RESULT:
        # For pickling purposes.
        return self.__class__, (self.pivot, self.threshold)


class ConvergenceError(NumericalError):
    """Raised when an iterative solver stops without meeting its tolerance.

    :param message: What failed to converge.
    :param iterations: Number of iterations performed.
    :param residual: Last measured residual or relative change.
    """

    def __init__(self, message: str, iterations: int, residual: float) -> None:
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.message = message

    def __reduce__(self) -> _TYPE_REDUCE_RESULT:
        # For pickling purposes.
        return self.__class__, (self.message, self.iterations, self.residual)


class SpectralError(NumericalError):
    """Raised when a required eigenvalue is absent or has the wrong sign."""


class DivergenceError(NumericalError):
    """Raised when a Laplace transform or Neumann series has no sum at ``x``."""

    def __init__(self, x: float, spectral_radius: float) -> None:
        self.x = x
        self.spectral_radius = spectral_radius
        super().__init__(
            f"Series diverges at x={x!r} (spectral radius {spectral_radius:.12g})"
        )

    def __reduce__(self) -> _TYPE_REDUCE_RESULT:
        # For pickling purposes.
        return self.__class__, (self.x, self.spectral_radius)


class RangeError(NumericalError):
    """Raised when a target value lies outside the attainable interval."""

    def __init__(self, target: float, lower: float, upper: float) -> None:
        self.target = target
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"Target {target!r} is outside the attainable interval [{lower!r}, {upper!r}]"
        )

    def __reduce__(self) -> _TYPE_REDUCE_RESULT:
        # For pickling purposes.
        return self.__class__, (self.target, self.lower, self.upper)


class AccuracyError(NumericalError):
    """Raised when a quadrature cannot certify the requested accuracy."""


# Warnings


class DegeneracyWarning(JumpControlWarning):
    """Warned when a result is valid but not unique."""


class ImaginaryResidueWarning(JumpControlWarning):
    """Warned when a discarded imaginary part exceeds the diagnostics threshold."""


class ClosedFormMismatchWarning(JumpControlWarning):
    """Warned when two algebraically equal closed forms disagree numerically."""
