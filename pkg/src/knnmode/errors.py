"""Exception types raised across the package."""


class KnnModeError(Exception):
    """Base class for all package errors."""


class ConfigError(KnnModeError, ValueError):
    """Invalid configuration: bad rank, risk, budget or schedule parameters."""


class ParseError(KnnModeError, ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class InstanceError(KnnModeError, ValueError):
    """The point set or instance violates a structural requirement."""


class NonIdentifiableError(InstanceError):
    """A gap is zero, so the target (k-NN or mode) is not uniquely defined."""


class ContractError(KnnModeError, RuntimeError):
    """An operation was called in a state that its contract forbids."""
