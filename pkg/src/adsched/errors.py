"""Exception hierarchy shared by all modules."""


class AdschedError(Exception):
    """Base class for every error raised by this package."""


class ModelError(AdschedError, ValueError):
    """A server model or policy failed validation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class BoundaryProbability(ModelError):
    """A transition or service probability sits on 0 or 1."""


class MissingEntry(ModelError):
    """A required per-state table entry is absent."""


class BadRange(ModelError):
    """A value or index lies outside its admissible range."""


class ConfigError(AdschedError, ValueError):
    """A configuration document is malformed."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class TooLarge(AdschedError):
    """A computation would exceed a configured resource cap."""


class SingularSystem(AdschedError):
    """A stationary linear system could not be solved uniquely."""


class InconsistentClassification(AdschedError):
    """Graph-based class detection disagrees with the closed-form structure."""


class NoConvergence(AdschedError):
    """An iterative solver hit its iteration limit."""


class UndefinedEntry(AdschedError, KeyError):
    """A projected policy entry has no mass behind it."""


class NoVisits(UndefinedEntry):
    """The simulator never visited the server state."""


class ZeroDenominator(UndefinedEntry):
    """The truncated stationary PMF puts no mass on the server state."""
