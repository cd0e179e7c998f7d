"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class InstabilityError(ArithmeticError):
    """A vO-DU queue is unstable: arrivals reach or exceed service capacity."""


class StateError(RuntimeError):
    """An object was used in a state that does not allow the call."""


class ResourceError(RuntimeError):
    """A search or enumeration budget ran out.

    ``incumbent`` holds the best result found before the budget ran out, if any.
    """

    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


class RejectionError(RuntimeError):
    """No vO-DU can take a demand without violating a constraint."""


class NumericError(ArithmeticError):
    """A loss or gradient became non-finite."""


class DataIntegrityError(ValueError):
    """Stored data contradicts itself (e.g. a taken action with zero probability)."""


class ParseError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """An experiment configuration is invalid or refers to missing artifacts."""
