"""
例外階層
ライブラリとCLIで共有する。全て SegmentationError のサブクラス
"""

from __future__ import annotations

from typing import Optional


class SegmentationError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(SegmentationError, ValueError):
    """Raised when arguments are invalid or dimensions do not agree."""


class DomainError(ArgumentError):
    """Raised when a function is evaluated outside its mathematical domain."""


class NumericError(SegmentationError, ArithmeticError):
    """Raised on non-finite values or matrices that fail factorization."""

    def __init__(self, message: str, *, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage


class TensorFileError(SegmentationError):
    """Raised when a grid tensor file cannot be decoded."""


class NotAGridTensorError(TensorFileError):
    def __init__(self, path: str):
        super().__init__(f"not a grid tensor file: {path}")
        self.path = path


class MalformedHeaderError(TensorFileError):
    pass


class PayloadLengthError(TensorFileError):
    def __init__(self, expected: int, actual: int):
        super().__init__(
            f"payload length mismatch: expected {expected} bytes, got {actual}"
        )
        self.expected = expected
        self.actual = actual


class BetaFileError(SegmentationError):
    """Raised when a JSON document (beta, posterior, labeled voxels) is malformed."""


class PhantomGenerationError(SegmentationError):
    pass


class ConfigError(SegmentationError):
    """Invalid experiment config; ``location`` is a JSON pointer into the document."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location or '/'}: {message}")
        self.location = location or "/"


class ExperimentError(SegmentationError):
    """A method failed inside the experiment harness."""

    def __init__(self, method: str, repetition: int, cause: BaseException):
        super().__init__(f"{method} failed at repetition {repetition}: {cause}")
        self.method = method
        self.repetition = repetition
