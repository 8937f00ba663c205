"""Shared exception types."""


class PegshareError(Exception):
    """Base class for all package errors."""


class DegenerateGeometryError(PegshareError):
    """Point configuration too degenerate for a rigid fit."""


class NotPositiveDefiniteError(PegshareError):
    """Kernel matrix factorization failed even after jitter escalation."""


class DegenerateAmplitudeError(PegshareError):
    """Goal and start coincide in a dimension that was not flagged degenerate."""


class InsufficientDataError(PegshareError):
    """Fewer samples than the operation requires."""


class ConfigError(PegshareError):
    """Invalid configuration values."""
