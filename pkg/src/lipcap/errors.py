"""Exception types shared across the package."""


class ShapeError(ValueError):
    """A vector or matrix does not have the shape an operation requires."""


class ConfigError(ValueError):
    """A normalizer or network configuration is inconsistent or incomplete."""
