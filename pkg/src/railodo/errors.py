"""Exception hierarchy for the railodo toolkit.

Every operational failure raises a subclass of :class:`RailodoError` so
callers can distinguish pipeline faults from programming errors.
"""


class RailodoError(Exception):
    """Base class for all railodo errors."""


class FormatError(RailodoError):
    """Malformed binary image stream (bad magic, truncated payload, ...)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptyWarpError(RailodoError):
    """Requested warp region maps entirely outside the source image."""


class DegeneratePointError(RailodoError):
    """Point rotated onto/behind the principal plane during compensation."""


class InsufficientOverlapError(RailodoError):
    """Too few valid template pixels at every candidate displacement."""


class NoTextureError(RailodoError):
    """No pixel passed the gradient gate during sub-pixel refinement."""


class InsufficientFlowError(RailodoError):
    """Fewer than eight flow vectors survived the epipole gate."""


class DegenerateFlowError(RailodoError):
    """Flow configuration is rank deficient for pose estimation."""


class AmbiguousPoseError(RailodoError):
    """Cheirality vote did not produce a unique pose candidate."""


class ParallelFlowError(RailodoError):
    """All flow lines are parallel; epipole intersection is undefined."""


class NoEpipoleError(RailodoError):
    """Zero translation: optical flow has no point of intersection."""


class IllConditionedTagError(RailodoError):
    """Fiducial observation too degenerate for homography decomposition."""


class InvalidMeasurementError(RailodoError):
    """Measurement noise matrix is not positive semidefinite."""


class MonotonicityError(RailodoError):
    """Measurements delivered out of timestamp order."""


class ConfigError(RailodoError):
    """Invalid run configuration file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentError(RailodoError):
    """Trajectory and ground-truth timestamps cannot be aligned."""


class DataError(RailodoError):
    """Dataset inconsistent with the run configuration."""
