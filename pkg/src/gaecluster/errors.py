"""Exception hierarchy shared by every pipeline stage."""


class PipelineError(Exception):
    """Base class for all errors raised by gaecluster."""


class ShapeError(PipelineError, ValueError):
    pass


class DomainError(PipelineError, ValueError):
    pass


class ParseError(PipelineError, ValueError):
    pass


class DataError(PipelineError, ValueError):
    pass


class ImputationError(DataError):
    pass


class NumericError(PipelineError, ArithmeticError):
    pass


class ConfigError(PipelineError, ValueError):
    """Invalid or unreadable run configuration."""
