"""Exception hierarchy shared across the pipeline."""


class RehabExtractError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class ParseError(RehabExtractError):
    pass


class ValidationError(RehabExtractError):
    pass


class NotFound(RehabExtractError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ConfigError(RehabExtractError):
    pass


class InsufficientSections(RehabExtractError):
    pass


class ShapeError(RehabExtractError, ValueError):
    pass


class DegenerateDistribution(RehabExtractError, ValueError):
    pass


class PatternError(RehabExtractError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnknownConcept(RehabExtractError):
    pass


class NoNumber(RehabExtractError, ValueError):
    pass


class EmptyCorpus(RehabExtractError):
    pass


class SingleClass(RehabExtractError):
    """Raised when a concept's training labels contain only one class."""


class KeyMismatch(RehabExtractError):
    pass


class Ineligible(RehabExtractError):
    pass


class BackendError(RehabExtractError):
    pass
