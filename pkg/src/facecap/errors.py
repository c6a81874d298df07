"""Exception hierarchy shared by all facecap modules."""


class FacecapError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FacecapError):
    """Inputs have wrong dimensions or violate a precondition."""


class NumericError(FacecapError):
    """Non-finite values or numerically invalid inputs."""


class UndefinedMetricError(FacecapError):
    """A metric is mathematically undefined for the given inputs
    (e.g. correlation of a zero-variance signal)."""


class ConfigError(FacecapError):
    """Invalid run configuration or config file."""


class FileFormatError(FacecapError):
    """A binary or CSV artifact failed validation on load."""


class DivergenceError(FacecapError):
    """An optimization produced a non-finite objective."""
