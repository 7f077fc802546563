"""Exception types shared across the toolkit."""

from __future__ import annotations

import numpy as np


class TvmapError(Exception):
    """Base class for all toolkit errors."""


class ArgumentError(TvmapError, ValueError):
    """An argument violates an operation's precondition."""


class DomainError(TvmapError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class FormatError(TvmapError):
    """Malformed file content. Carries the byte offset when one is known."""

    def __init__(self, message: str, *, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StepFailureError(TvmapError):
    """Backtracking exhausted its shrink budget without an acceptable step.

    Carries the last accepted iterate so callers can salvage partial work;
    the label oracle attaches the offending ``mu`` before re-raising.
    """

    def __init__(self, message: str, iterate: np.ndarray, mu: float | None = None):
        super().__init__(message)
        self.iterate = iterate
        self.mu = mu
