"""Semantic exception hierarchy shared by all copmtl modules.

The CLI maps these onto exit codes: usage/configuration problems exit 2,
data-format problems exit 3, numerical/estimation failures exit 4.
"""

from __future__ import annotations


class CopmtlError(Exception):
    """Base class for all copmtl errors."""


class UsageError(CopmtlError):
    """Caller violated an operation contract (empty batch, missing forward pass, ...)."""


class ConfigError(CopmtlError, ValueError):
    """Invalid specification or configuration (bad dims, non-PD covariance, ...)."""


class DataFormatError(CopmtlError):
    """A file on disk does not match its declared format."""


class DomainError(CopmtlError, ValueError):
    """Numerical argument outside the mathematical domain of an operation."""


class EstimationError(CopmtlError):
    """An estimator cannot produce a result (zero variance, rank deficiency)."""


class TrainingError(CopmtlError):
    """Training diverged; carries the trace collected so far."""

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []
