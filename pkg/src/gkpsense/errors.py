"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside its mathematical domain."""


class ConfigurationError(ValueError):
    """Numerical settings (grid, shot count, ...) are unusable."""


class PreconditionError(ValueError):
    """Input violates a protocol precondition."""


class NumericalPrecisionError(RuntimeError):
    """A numerical routine lost too much accuracy to be trusted."""
