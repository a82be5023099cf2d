"""Navigation unit: constant-velocity Kalman filter over the planar state
(x, y, heading, v), trajectory integration, and drift correction from
geo-referenced fiducial tags.

Covariance updates use the Joseph form throughout so the state covariance
stays symmetric positive semidefinite under any predict/update sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    IllConditionedTagError,
    InvalidMeasurementError,
    MonotonicityError,
)
from .geometry import Pose, wrap_angle
from .image import CameraModel, PixelPoint
from .mouse import VelocityEstimate


@dataclass(frozen=True)
class NavState:
    """Fused global planar pose: (x_g, y_g, heading, v)."""

    x_g: float
    y_g: float
    heading: float
    v: float
    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (4, 4):
            raise ValueError("cov must be 4x4")
        if np.abs(cov - cov.T).max() > 1e-9:
            raise ValueError("cov must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-9:
            raise ValueError("cov must be positive semidefinite")
        object.__setattr__(self, "heading", wrap_angle(self.heading))
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    @staticmethod
    def initial(x=0.0, y=0.0, heading=0.0, v=0.0, sigma=1.0) -> "NavState":
        return NavState(x, y, heading, v, np.eye(4) * sigma**2)


@dataclass(frozen=True)
class ProcessNoise:
    """Process-noise spectral densities for the constant-velocity model."""

    q_pos: float = 1e-6
    q_heading: float = 1e-8
    q_vel: float = 1e-4


def kf_predict(state: NavState, dt: float, q: ProcessNoise) -> NavState:
    """Constant-velocity planar prediction."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    c, s = math.cos(state.heading), math.sin(state.heading)
    x = state.x_g + state.v * c * dt
    y = state.y_g + state.v * s * dt
    f = np.array(
        [
            [1.0, 0.0, -state.v * s * dt, c * dt],
            [0.0, 1.0, state.v * c * dt, s * dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    qm = np.diag([q.q_pos * dt, q.q_pos * dt, q.q_heading * dt, q.q_vel * dt])
    cov = f @ state.cov @ f.T + qm
    return NavState(x, y, state.heading, state.v, cov)


def _joseph_update(state_vec, cov, z, h, r):
    """Standard linear update; returns (state_vec, cov, innovation, s)."""
    y = z - h @ state_vec
    s = h @ cov @ h.T + r
    k = cov @ h.T @ np.linalg.inv(s)
    new_vec = state_vec + k @ y
    i_kh = np.eye(len(state_vec)) - k @ h
    new_cov = i_kh @ cov @ i_kh.T + k @ r @ k.T
    return new_vec, (new_cov + new_cov.T) / 2.0, y, s


def _check_noise(r: np.ndarray):
    if not np.all(np.isfinite(r)) or np.linalg.eigvalsh((r + r.T) / 2.0).min() < 0.0:
        raise InvalidMeasurementError("measurement noise matrix is not PSD")


def heading_variance_from_cov(pose_cov: np.ndarray, step_len_m: float) -> float:
    """Heading variance implied by the planar step covariance.

    The lateral spread of a motion step of length d maps to a heading angle
    spread of sigma_lat / d; the step covariance trace bounds sigma_lat^2.
    """
    return float(np.trace(pose_cov)) / max(step_len_m, 1e-6) ** 2


def kf_update_velocity(
    state: NavState,
    meas: VelocityEstimate,
    pose_cov: Optional[np.ndarray] = None,
    heading_meas: Optional[float] = None,
    heading_var: Optional[float] = None,
) -> NavState:
    """Fuse a correlation-unit velocity (and optionally a heading
    observation weighted by the SfM planar covariance) into the state.
    """
    vec = np.array([state.x_g, state.y_g, state.heading, state.v])
    if heading_meas is None:
        h = np.array([[0.0, 0.0, 0.0, 1.0]])
        r = np.array([[meas.sigma_vz**2]])
        _check_noise(r)
        z = np.array([meas.v_l])
        new_vec, new_cov, _, _ = _joseph_update(vec, state.cov, z, h, r)
    else:
        if heading_var is None:
            if pose_cov is None:
                raise InvalidMeasurementError(
                    "heading update needs heading_var or pose_cov"
                )
            step = abs(state.v) * 1.0
            heading_var = heading_variance_from_cov(pose_cov, step)
        h = np.array([[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]])
        r = np.diag([meas.sigma_vz**2, heading_var])
        _check_noise(r)
        # wrap the heading innovation
        z = np.array([meas.v_l, state.heading + wrap_angle(heading_meas - state.heading)])
        new_vec, new_cov, _, _ = _joseph_update(vec, state.cov, z, h, r)
    return NavState(new_vec[0], new_vec[1], new_vec[2], new_vec[3], new_cov)


class Trajectory:
    """Ordered trace of fused poses; rejects out-of-order timestamps."""

    def __init__(self):
        self.times: list[float] = []
        self.states: list[NavState] = []
        self.path_length = 0.0

    def append(self, t: float, state: NavState):
        if self.times and t <= self.times[-1]:
            raise MonotonicityError(
                f"timestamp {t} not after previous {self.times[-1]}"
            )
        if self.times:
            self.path_length += state.v * (t - self.times[-1])
        self.times.append(t)
        self.states.append(state)

    def positions(self) -> np.ndarray:
        return np.array([[s.x_g, s.y_g] for s in self.states])


# ---------------------------------------------------------------------------
# Fiducial tag observations


@dataclass(frozen=True)
class TagObservation:
    """Synthetic or externally detected square-tag sighting."""

    tag_id: int
    corners_img: tuple  # 4 PixelPoints, order TL, TR, BR, BL
    tag_world: Pose
    side: float

    def __post_init__(self):
        if len(self.corners_img) != 4:
            raise ValueError("need exactly 4 corners")
        if self.side <= 0.0:
            raise ValueError("tag side must be positive")
        object.__setattr__(self, "corners_img", tuple(self.corners_img))


def _tag_plane_corners(side: float) -> np.ndarray:
    """Corner coordinates in the tag plane (x right, y down), TL TR BR BL."""
    h = side / 2.0
    return np.array([[-h, -h], [h, -h], [h, h], [-h, h]])


def _dlt_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform from 4+ plane points to image points."""
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    a = np.array(rows)
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] <= 0.0 or sv[0] / sv[-2] > 1e10:
        raise IllConditionedTagError("tag corners are degenerate for a homography")
    h = vt[-1].reshape(3, 3)
    # collinear image corners admit an exact but rank-deficient homography;
    # such an H cannot be decomposed into a pose
    hs = np.linalg.svd(h, compute_uv=False)
    if hs[-1] <= 0.0 or hs[0] / hs[-1] > 1e10:
        raise IllConditionedTagError("tag corners are degenerate for a homography")
    return h


def _rodrigues(w: np.ndarray) -> np.ndarray:
    th = np.linalg.norm(w)
    if th < 1e-12:
        return np.eye(3)
    k = w / th
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(th) * kx + (1.0 - math.cos(th)) * kx @ kx


def _refine_reprojection(
    pose: Pose, pts3: np.ndarray, obs_uv: np.ndarray, cam: CameraModel, iters: int = 15
) -> Pose:
    """Gauss-Newton polish of a pose on the corner reprojection residuals.

    The linear homography decomposition is not the least-squares estimate
    under pixel noise; a few deterministic iterations remove most of the
    planar-pose tilt-ambiguity amplification.
    """
    r, t = pose.r.copy(), pose.t.copy()
    fx, fy = cam.fx, cam.fy
    n = len(pts3)
    for _ in range(iters):
        pc = pts3 @ r.T + t
        if np.any(pc[:, 2] <= 1e-9):
            break
        u = cam.c_x + fx * pc[:, 0] / pc[:, 2]
        v = cam.c_y + fy * pc[:, 1] / pc[:, 2]
        res = np.concatenate([u - obs_uv[:, 0], v - obs_uv[:, 1]])
        jac = np.zeros((2 * n, 6))
        for i in range(n):
            x, y, z = pc[i]
            du = np.array([fx / z, 0.0, -fx * x / z**2])
            dv = np.array([0.0, fy / z, -fy * y / z**2])
            px = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
            jac[i, :3] = du @ (-px)
            jac[i, 3:] = du
            jac[n + i, :3] = dv @ (-px)
            jac[n + i, 3:] = dv
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        r = _rodrigues(step[:3]) @ r
        t = t + step[3:]
        if np.linalg.norm(step) < 1e-12:
            break
    return Pose(r, t)


def tag_planar_pose(obs: TagObservation, cam: CameraModel) -> Pose:
    """Pose of the tag in the camera frame from its 4 projected corners.

    Homography from the tag plane to pixels, decomposed with the known
    intrinsics; the sign is fixed so the tag lies in front of the camera.
    The linear estimate is then polished by a deterministic Gauss-Newton
    pass on the reprojection residuals.
    """
    src = _tag_plane_corners(obs.side)
    dst = np.array([[p.u, p.v] for p in obs.corners_img])
    h = _dlt_homography(src, dst)
    m = np.linalg.inv(cam.intrinsic_matrix()) @ h
    n1, n2 = np.linalg.norm(m[:, 0]), np.linalg.norm(m[:, 1])
    if n1 <= 1e-12 or n2 <= 1e-12:
        raise IllConditionedTagError("degenerate homography decomposition")
    lam = 2.0 / (n1 + n2)
    r1 = lam * m[:, 0]
    r2 = lam * m[:, 1]
    t = lam * m[:, 2]
    if t[2] < 0.0:  # tag must lie in front of the camera
        r1, r2, t = -r1, -r2, -t
    r3 = np.cross(r1, r2)
    r_approx = np.column_stack([r1, r2, r3])
    u, _, vt = np.linalg.svd(r_approx)
    r = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
    pts3 = np.column_stack([src, np.zeros(len(src))])
    return _refine_reprojection(Pose(r, t), pts3, dst, cam)


def apply_tag_correction(
    state: NavState,
    tag_pose_world: Pose,
    relative_pose: Pose,
    r_tag: np.ndarray,
    camera_height: float = 0.0,
    mount_yaw: float = 0.0,
) -> tuple[NavState, bool]:
    """Absolute position/heading update from one tag sighting.

    ``relative_pose`` is the tag pose in the camera frame (output of
    :func:`tag_planar_pose`); the camera world pose is
    ``tag_world o relative_pose^-1``. A deterministic 5-sigma innovation
    gate rejects outliers; a gated-out sighting returns the state unchanged
    with ``applied=False``.
    """
    _check_noise(np.asarray(r_tag, dtype=float))
    cam_world = tag_pose_world.compose(relative_pose.inverse())
    fwd = cam_world.r[:, 2]  # camera optical axis in world coordinates
    heading = math.atan2(fwd[1], fwd[0]) - mount_yaw
    z = np.array([cam_world.t[0], cam_world.t[1], wrap_angle(heading)])
    vec = np.array([state.x_g, state.y_g, state.heading, state.v])
    h = np.array(
        [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
    )
    y = z - h @ vec
    y[2] = wrap_angle(y[2])
    s = h @ state.cov @ h.T + r_tag
    d2 = float(y @ np.linalg.solve(s, y))
    if d2 > 25.0 * 3:
        return state, False
    k = state.cov @ h.T @ np.linalg.inv(s)
    new_vec = vec + k @ y
    i_kh = np.eye(4) - k @ h
    new_cov = i_kh @ state.cov @ i_kh.T + k @ np.asarray(r_tag) @ k.T
    new_cov = (new_cov + new_cov.T) / 2.0
    return NavState(new_vec[0], new_vec[1], new_vec[2], new_vec[3], new_cov), True
