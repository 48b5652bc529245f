"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`FrameDivError`, so callers can catch the whole family at once.
Errors that signal bad input also derive from :class:`ValueError`.
"""

from __future__ import annotations


class FrameDivError(Exception):
    """Base class for all package errors."""


class DegenerateSpectrum(FrameDivError, ValueError):
    """Eigenvalues are not distinct enough for a formula with simple poles."""


class ZeroConventionViolated(FrameDivError, ValueError):
    """The last eigenvalue was required to be exactly zero and is not."""


class DegenerateCriticalPoints(FrameDivError, ValueError):
    """Q' has a repeated or non-real root."""


class EmptyInterval(FrameDivError, ValueError):
    """The admissible shift interval is empty."""


class ComplexRootsDetected(FrameDivError, ValueError):
    """A polynomial expected to be real-rooted has complex roots."""


class NotAThresholdEndpoint(FrameDivError, ValueError):
    """A blow-up scan was requested at an endpoint that is not a threshold."""


class SingularMetric(FrameDivError, ValueError):
    """The metric is not positive definite at a sample point."""


class StepTooLarge(FrameDivError, ArithmeticError):
    """A finite-difference consistency check failed; the step is misconfigured."""


class NotClosed(FrameDivError, ValueError):
    """An integral over a closed manifold was requested on a non-periodic box."""


class NotCodazzi(FrameDivError, ValueError):
    """The tensor field is not Codazzi to the required tolerance."""

    def __init__(self, message: str, residual: float | None = None) -> None:
        super().__init__(message)
        #: The measured Codazzi residual, when available.
        self.residual = residual


class HypothesisViolated(FrameDivError, ValueError):
    """A constancy hypothesis on the symmetric functions does not hold."""


class RankDeficient(FrameDivError, ValueError):
    """The differential of an immersion drops rank."""


class BadParameters(FrameDivError, ValueError):
    """Invalid parameters for a factory."""


class ExpressionError(FrameDivError, ValueError):
    """An arithmetic expression could not be parsed or evaluated."""


class ConfigError(FrameDivError, ValueError):
    """A configuration file or command line is invalid."""
