"""Exception hierarchy shared across the package."""


class GraphProbeError(Exception):
    """Base class for all package errors."""


class ParameterError(GraphProbeError, ValueError):
    """An argument is outside its documented domain."""


class EnsembleError(GraphProbeError):
    """A random-graph ensemble could not produce a valid sample."""


class NumericalError(GraphProbeError, ArithmeticError):
    """A linear-algebra routine failed or produced an untrustworthy result."""


class MetricError(GraphProbeError, ValueError):
    """An evaluation metric is undefined for the given data."""


class DatasetParseError(GraphProbeError):
    """A dataset or model file does not match the expected schema."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        loc = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{loc}: {message}")
