"""Deterministic monocular rail odometry.

Optical-correlation velocity from a rectified track-bed view, sparse-flow
pose deltas with planar covariance, Kalman fusion and fiducial drift
correction, plus a synthetic ground-truth generator and CLI.
"""

__version__ = "0.1.0"

from .errors import RailodoError
from .geometry import Pose
from .image import CameraModel, Homography, Image, PixelPoint
from .mouse import (
    DisplacementMeasurement,
    KeyframePolicy,
    TemplateSpec,
    TrainMouse,
    VelocityEstimate,
)
from .epipolar import Epipole, FlowVector, MatchCandidateSet, PoseDelta
from .fusion import NavState, ProcessNoise, TagObservation, Trajectory

__all__ = [
    "__version__",
    "RailodoError",
    "Pose",
    "CameraModel",
    "Homography",
    "Image",
    "PixelPoint",
    "DisplacementMeasurement",
    "KeyframePolicy",
    "TemplateSpec",
    "TrainMouse",
    "VelocityEstimate",
    "Epipole",
    "FlowVector",
    "MatchCandidateSet",
    "PoseDelta",
    "NavState",
    "ProcessNoise",
    "TagObservation",
    "Trajectory",
]
