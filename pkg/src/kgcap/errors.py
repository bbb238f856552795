"""Exception hierarchy shared across the toolkit.

Parse and validation errors carry an optional line number so CLI users can
locate the offending record in an input file.
"""

from __future__ import annotations


class KgcapError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(KgcapError):
    """A line of an input file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(KgcapError):
    """An input was syntactically fine but violated a documented constraint."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigurationError(KgcapError):
    """A configuration value (or combination of values) is unusable."""


class MissingWordError(KgcapError, KeyError):
    """A term required by a vector-space operation has no stored vector."""

    def __init__(self, word: str):
        self.word = word
        super().__init__(f"no vector stored for term {word!r}")

    def __str__(self) -> str:  # KeyError quotes its payload; keep the message readable
        return self.args[0]


class NumericError(KgcapError):
    """A numeric computation left the representable/finite range."""
