"""Rotation matrices and rigid transforms shared across the toolkit.

Conventions:
  - World frame: x/y in the track plane, z up, ground at z = 0.
  - Camera frame: x right, y down, z along the optical axis (into the scene).
  - A :class:`Pose` maps child coordinates into parent coordinates:
    ``x_parent = r @ x_child + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_zyx(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def euler_zyx(r: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`rot_zyx`; pitch clamped to avoid NaN at gimbal lock."""
    pitch = math.asin(max(-1.0, min(1.0, -r[2, 0])))
    if abs(r[2, 0]) < 1.0 - 1e-12:
        yaw = math.atan2(r[1, 0], r[0, 0])
        roll = math.atan2(r[2, 1], r[2, 2])
    else:
        yaw = math.atan2(-r[0, 1], r[1, 1])
        roll = 0.0
    return yaw, pitch, roll


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        return False
    return (
        np.linalg.norm(r.T @ r - np.eye(3)) <= tol
        and np.linalg.det(r) > 0.0
    )


def rotation_angle(r: np.ndarray) -> float:
    """Angle of a rotation matrix in radians."""
    c = (np.trace(r) - 1.0) / 2.0
    return math.acos(max(-1.0, min(1.0, c)))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform: ``x_parent = r @ x_child + t``."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not is_rotation(r, tol=1e-6):
            raise ValueError("Pose rotation is not orthonormal with det +1")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.r @ other.r, self.r @ other.t + self.t)

    def inverse(self) -> "Pose":
        return Pose(self.r.T, -self.r.T @ self.t)

    def transform(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.r.T + self.t

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))


def camera_orientation(heading: float, pitch_down: float) -> np.ndarray:
    """World-to-camera rotation for a camera rigidly mounted on the train.

    ``heading`` is the train heading (angle of the forward axis in the world
    xy-plane), ``pitch_down`` the angle of the optical axis below horizontal
    (pi/2 = straight down). Camera x points to the right of the train.
    Returns R with ``x_cam = R @ (X_world - C)``.
    """
    fwd = np.array([math.cos(heading), math.sin(heading), 0.0])
    right = np.array([math.sin(heading), -math.cos(heading), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    z_c = math.cos(pitch_down) * fwd + math.sin(pitch_down) * down
    x_c = right
    y_c = np.cross(z_c, x_c)
    return np.stack([x_c, y_c, z_c])


def rect_rotation(pitch_down: float) -> np.ndarray:
    """Mounting rotation between the physical camera and the top view.

    For a camera pitched ``pitch_down`` below horizontal the returned matrix
    R satisfies ``p_phys = R @ p_topview`` for ray directions, which is the
    member used by the rectifying homography. Independent of heading.
    """
    return camera_orientation(0.0, pitch_down) @ camera_orientation(0.0, math.pi / 2.0).T
