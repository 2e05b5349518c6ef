"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(ValueError):
    """A configuration value or file is invalid."""


class ParseError(ValueError):
    """A data file is malformed; message carries the offending line number."""


class NumericsError(RuntimeError):
    """A loss term became non-finite during training."""

    def __init__(self, term: str, value: float):
        self.term = term
        self.value = value
        super().__init__(f"non-finite loss term '{term}': {value!r}")
