"""Validation helpers and artifact I/O."""

from .validation import ConvergenceError, BrokenPairError

__all__ = [
    "ConvergenceError",
    "BrokenPairError",
]
