"""Exception types shared across the toolkit.

Plain ValueError is used for ordinary invalid arguments; the classes here
mark failure modes callers may want to catch separately.
"""


class DomainError(ValueError):
    """Evaluation or interpolation point outside the owning domain."""


class ShapeError(ValueError):
    """Operands fed to a primitive do not have compatible shapes."""


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf; carries the offending op name."""


class StateError(RuntimeError):
    """Operation invoked out of order (e.g. backward without a recorded tape)."""


class NumericError(RuntimeError):
    """Linear algebra failure in a solver; carries the offending row if known."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class InsufficientDataError(ValueError):
    """Too few usable nodes/samples to carry out a fit."""


class FormatError(ValueError):
    """Bad magic, version, or field while reading a binary artifact."""


class CorruptionError(FormatError):
    """Artifact truncated or byte count inconsistent with its header."""


class StageError(RuntimeError):
    """A pipeline stage was invoked before the stage it depends on."""


class DegenerateSampleError(ValueError):
    """A data sample makes the requested statistic undefined (e.g. zero norm)."""


class DivergedError(RuntimeError):
    """Training produced a non-finite loss; carries the history so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
