"""
Exceptions raised by the alignment library.

Every error carries a short machine-readable ``reason`` which the CLI prints
on the error stream as ``error: <reason>: <message>``.
"""

from enum import Enum
from typing import Any, Optional


class Diagnostic(str, Enum):
    """Non-fatal conditions attached to results instead of raised."""

    RANK_DEFICIENT = "rank-deficient"
    AMBIGUOUS_ALIGNMENT = "ambiguous-alignment"
    UNDERDETERMINED = "underdetermined"
    WARM_START_FAILED = "warm-start-failed"


class LorentzAlignError(Exception):
    reason = "error"


class InvalidInputError(LorentzAlignError, ValueError):
    reason = "invalid-input"


class ShapeMismatchError(InvalidInputError):
    reason = "shape-mismatch"


class IncompatibleMethodError(InvalidInputError):
    reason = "incompatible-method"


class VectorFileError(InvalidInputError):
    reason = "parse-error"


class ConfigError(InvalidInputError):
    reason = "invalid-config"


class NotAnAlgebraElementError(InvalidInputError):
    reason = "not-an-algebra-element"


class NotALorentzMatrixError(InvalidInputError):
    reason = "invalid-lorentz-matrix"


class NotARotationError(InvalidInputError):
    reason = "invalid-rotation"


class RankDeficientError(LorentzAlignError):
    reason = "rank-deficient"

    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


class NotInIdentityComponentError(LorentzAlignError):
    reason = "not-in-identity-component"


class ConvergenceError(LorentzAlignError):
    """
    Raised when an iteration runs out of budget.

    ``best`` holds the best-so-far result when the caller can still use it
    (e.g. the direct Lorentz solver's last iterate).
    """

    reason = "non-convergence"

    def __init__(self, message: str, iterations: int, best: Optional[Any] = None):
        super().__init__(message)
        self.iterations = iterations
        self.best = best
