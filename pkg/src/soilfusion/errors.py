"""Exception hierarchy shared by all soilfusion modules."""


class SoilFusionError(ValueError):
    """Base class for every error raised by this package."""


class SchemaError(SoilFusionError):
    """A record or file does not match the expected layout."""


class ResamplingError(SoilFusionError):
    """A GPR profile cannot be aggregated to 10 cm cells."""


class InsufficientDataError(SoilFusionError):
    """Not enough rows, knots or distinct values for the requested operation."""


class DimensionError(SoilFusionError):
    """Feature count of a query does not match the fitted model."""


class UndefinedMetricError(SoilFusionError):
    """A metric is undefined for the given input (e.g. zero variance)."""
