"""Exception hierarchy shared across the simulator."""
from __future__ import annotations


class DarumaError(Exception):
    """Base class for all simulator errors."""


class OutOfRange(DarumaError, ValueError):
    pass


class OutOfHorizon(DarumaError, ValueError):
    pass


class ParseError(DarumaError, ValueError):
    pass


class SchemaError(DarumaError, ValueError):
    """Scenario/config document violates an invariant.

    ``path`` points at the offending element, e.g. ``actors[2].spawn_t``.
    """

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class UnknownScenario(DarumaError, KeyError):
    pass


class BadTarget(DarumaError, ValueError):
    pass


class MismatchedTimestamps(DarumaError, ValueError):
    pass


class DimensionMismatch(DarumaError, ValueError):
    pass


class UnknownCurrentChannel(DarumaError, ValueError):
    pass
