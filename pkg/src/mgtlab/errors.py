"""Exception types shared across the lab."""


class MgtLabError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateThreshold(MgtLabError):
    """The small-frequency threshold formula has a non-positive denominator."""


class OutOfZone(MgtLabError):
    """A small-frequency expansion was requested outside its validity zone."""


class BackendMismatch(MgtLabError):
    """An operation received a field in the wrong representation."""


class HypothesisViolated(MgtLabError):
    """A moment hypothesis required by a lower-bound statement is not met."""


class DegenerateSeries(MgtLabError):
    """A norm time-series is unusable for rate fitting."""


class InsufficientHistory(MgtLabError):
    """A time-convolution was requested beyond the sampled source history."""


class NoContraction(MgtLabError):
    """Successive fixed-point iterates stopped contracting."""


class StabilityLimit(MgtLabError):
    """An explicit time step exceeds the stability bound of the scheme."""


class DimensionUnsupported(MgtLabError):
    """The requested check is stated only above a dimension threshold."""


class ConfigError(MgtLabError):
    """A scenario file is malformed; the message names the offending field."""


class MissingData(MgtLabError):
    """A post-processing step found no data to work on."""
