# src/sms_verify/errors.py
"""
Exception hierarchy.

Every error raised by this package derives from SmsError, and each leaf
also derives from the closest builtin so plain `except ValueError` still works.
"""


class SmsError(Exception):
    """Base class of all sms_verify errors."""


class DimensionError(SmsError, ValueError):
    """Shape mismatch between tensors, layers or datasets."""


class InputError(SmsError, ValueError):
    """Invalid data handed to an operation (labels out of range, empty sets...)."""


class ParameterError(SmsError, ValueError):
    """Invalid scalar parameter (N > d, k > N, T < 1 ...)."""


class StateError(SmsError, RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class NumericalError(SmsError, ArithmeticError):
    """NaN or Inf produced by a numeric op."""


class FormatError(SmsError, ValueError):
    """
    Malformed file.

    Attributes:
        offset: byte offset for binary formats, if known.
        line: 1-based line number for text formats, if known.
    """

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        where = []
        if offset is not None:
            where.append(f"byte offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.line = line


class TrainingError(SmsError, RuntimeError):
    """Training diverged. `epoch` is the 1-based epoch where it happened."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")
        self.epoch = epoch


class CalibrationError(SmsError, RuntimeError):
    """A trained model did not reach its required accuracy floor."""


class UnlearningError(SmsError, RuntimeError):
    """Unlearning aborted. `trace` holds the rows recorded up to the abort."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(SmsError, ValueError):
    """Invalid experiment config or output directory state."""


class StageError(SmsError, RuntimeError):
    """A pipeline stage failed. `stage` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


class IntegrityError(SmsError, RuntimeError):
    """An artifact listed in a manifest is missing or its hash does not match."""
