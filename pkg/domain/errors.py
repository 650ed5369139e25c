# domain/errors.py

from __future__ import annotations


class RelibevError(Exception):
    """Base class for every error raised by this project."""

    exit_code = 2


class ValidationError(RelibevError):
    """Bad user input: configuration, arguments or shapes."""

    exit_code = 1


class ConfigurationError(ValidationError):
    pass


class ArgumentError(ValidationError, ValueError):
    pass


class DimensionError(ValidationError, ValueError):
    """Shape mismatch between operands."""

    def __init__(self, op: str, *shapes) -> None:
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)


class NumericError(RelibevError, ArithmeticError):
    pass


class DegenerateVectorError(NumericError):
    pass


class CapacityError(RelibevError):
    pass


class TrainingError(RelibevError):
    """Non-finite loss during training."""

    def __init__(self, message: str, stage: int | None = None, epoch: int | None = None) -> None:
        where = []
        if stage is not None:
            where.append(f"stage {stage}")
        if epoch is not None:
            where.append(f"epoch {epoch}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.stage = stage
        self.epoch = epoch


class SelfTestFailure(RelibevError):
    exit_code = 3


class StorageError(RelibevError):
    """File could not be read or written; the message names the path."""


class FormatError(RelibevError):
    """File content does not match its declared binary/text format."""
