"""Exception hierarchy shared across the package."""


class DerccError(Exception):
    """Base class for all package errors."""


class ParseError(DerccError):
    """A CSV row or column could not be parsed."""


class ValidationError(DerccError):
    """Input data violates a structural invariant (non-radial, dangling
    reference, duplicate id, bad bound ordering, ...)."""


class DegenerateLineError(DerccError):
    """Line with zero resistance and zero reactance."""


class ModelError(DerccError):
    """Optimization model could not be assembled from the inputs."""


class DomainError(DerccError):
    """Operation called with arguments outside its mathematical domain."""


class ExtractionError(DerccError):
    """Solver values cannot be mapped back to physical quantities."""


class TopologyError(DerccError):
    """Network topology unsuitable for the requested analysis."""
