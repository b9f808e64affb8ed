"""Exception types raised across the library.

Everything derives from :class:`RegkitError` so callers can catch the
library's failures with one clause.  Errors that amount to bad arguments
also derive from ``ValueError``.
"""

from __future__ import annotations


class RegkitError(Exception):
    """Base class for all library errors."""


class InvalidModelError(RegkitError, ValueError):
    """Transfer function is malformed (empty or leading-zero denominator)."""


class UnstablePoleError(RegkitError, ValueError):
    """Pole magnitude is not strictly inside the unit disc."""


class GridError(RegkitError, ValueError):
    """Pole-grid parameters cannot produce a valid dictionary."""


class SingularRegressorError(RegkitError):
    """Regressor matrix is numerically rank deficient."""


class SingularFactorError(RegkitError):
    """Kernel square-root factor is singular where an inverse is required."""


class ConjugateClosureError(RegkitError):
    """Assembled kernel has a non-negligible imaginary part."""


class NotInSpanError(RegkitError):
    """Sample does not lie in the span of the active atoms."""


class InsufficientDataError(RegkitError):
    """Too few data points for the requested model order."""


class InfiniteRhoError(RegkitError):
    """Residual is exactly zero, so the radius formula diverges."""


class ConfigError(RegkitError, ValueError):
    """Config file contains unknown keys or unparseable values."""
