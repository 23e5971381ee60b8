"""Exception hierarchy shared by all botforecast modules."""


class BotforecastError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BotforecastError, ValueError):
    """An input object violates one of its invariants."""


class EmptyInputError(BotforecastError, ValueError):
    pass


class InsufficientDataError(BotforecastError, ValueError):
    """Too few transitions to estimate a model."""


class StructuralError(BotforecastError):
    """A chain lacks a structural property an operation needs (e.g. irreducibility)."""

    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair


class ParseError(BotforecastError, ValueError):
    """A fast-alert line could not be parsed.

    ``offset`` is the byte offset in the line where parsing failed.
    """

    def __init__(self, reason: str, offset: int, line: str = ""):
        super().__init__(f"{reason} (at byte {offset})")
        self.reason = reason
        self.offset = offset
        self.line = line


class SchemaError(BotforecastError, ValueError):
    """A model/spec file has an unknown or incompatible schema version."""


class TemporalOrderError(BotforecastError, ValueError):
    pass
