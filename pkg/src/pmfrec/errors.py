"""Semantic exception hierarchy shared across the package."""


class PmfrecError(Exception):
    """Base class for all package-specific errors."""


class CapacityError(PmfrecError):
    """A dense tensor would exceed the configured element budget."""


class DataError(PmfrecError):
    """Input data is malformed or inconsistent with declared metadata."""


class NumericalError(PmfrecError):
    """A solver produced non-finite values or was configured unusably."""


class ZeroEvidenceError(PmfrecError):
    """Conditioning evidence has probability zero under the model."""
