"""Exception types shared across the package."""


class BeliefBenchError(Exception):
    """Base class for all package errors."""


class InvalidModelError(BeliefBenchError, ValueError):
    """A POMDP, policy or config failed validation.

    ``field`` is a dotted path into the offending document when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class UnreachableHistoryError(BeliefBenchError):
    """A history with (numerically) zero probability was queried for its belief."""


class EnumerationCapError(BeliefBenchError):
    """Exact enumeration would exceed the configured size cap."""


class MissingExactDistError(BeliefBenchError):
    """An oracle-only operation was given a sampler without an exact distribution."""


class LayerMismatchError(BeliefBenchError, ValueError):
    """Arguments live on different time layers or domains."""
