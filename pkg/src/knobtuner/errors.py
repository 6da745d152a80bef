"""Exception types shared across the package."""


class KnobTunerError(Exception):
    """Base class for all package-specific errors."""


class SpaceParseError(KnobTunerError):
    """Space or landscape document is not well-formed."""


class SpaceValidationError(KnobTunerError):
    """Space document parsed but violates an invariant; names the knob."""


class DimensionMismatchError(KnobTunerError):
    """A configuration, action, or vector has the wrong number of entries."""


class EnumerationCapError(KnobTunerError):
    """Design space is too large to enumerate under the configured cap."""


class BackendUnavailableError(KnobTunerError):
    """Measurement backend failed at the batch level (crash, timeout, missing)."""


class LogParseError(KnobTunerError):
    """Measurement log line failed to parse; message carries the line number."""


class NoValidResultError(KnobTunerError):
    """Tuning finished without a single successful measurement."""


class MismatchedTaskError(KnobTunerError):
    """Runs handed to the comparison report come from different task specs."""


class DegenerateVarianceError(KnobTunerError):
    """Projection requested on points with zero covariance."""
