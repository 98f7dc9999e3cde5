"""Exception types shared across the package."""


class HyperHarError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(HyperHarError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(HyperHarError, ValueError):
    """A configuration value is invalid. ``key`` names the offending setting."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class NumericError(HyperHarError, ArithmeticError):
    """A computation produced a non-finite value."""


class ConstructionError(HyperHarError, ValueError):
    """A hypergraph could not be built from the given instances."""


class ProjectionError(HyperHarError, ValueError):
    """Embeddings cannot be projected (too few nodes)."""
