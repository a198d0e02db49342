"""Exception hierarchy.

``ValidationError`` subclasses signal bad user input (CLI exit code 1);
``FitFailure`` subclasses are raised by the GLM engine and are normally
caught by the robustness ladder.
"""

from __future__ import annotations


class AbnError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(AbnError):
    pass


class MissingValue(ValidationError):
    pass


class UnknownColumn(ValidationError):
    pass


class MissingSpec(ValidationError):
    pass


class LevelMismatch(ValidationError):
    pass


class IllegalParent(ValidationError, IndexError):
    pass


class ConstraintConflict(ValidationError):
    pass


class NodeMismatch(ValidationError):
    pass


class CyclicDag(ValidationError):
    pass


class IncompleteCache(ValidationError):
    pass


class KTooLarge(ValidationError):
    pass


class UsageError(ValidationError):
    pass


class FitFailure(AbnError):
    """A single GLM fit failed; ``coefficients`` holds the iterate at failure."""

    def __init__(self, message, coefficients=None, iterations=0):
        super().__init__(message)
        self.coefficients = coefficients
        self.iterations = iterations


class NotConverged(FitFailure):
    pass


class Diverged(FitFailure):
    pass


class RankDeficient(FitFailure):
    pass


class DegenerateFit(FitFailure):
    """Residual variance collapsed to zero (gaussian perfect fit)."""


class Unfittable(AbnError):
    """Even the intercept-only model could not be fit."""
