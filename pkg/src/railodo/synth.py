"""Synthetic ground-truth scene generation.

Procedural ballast texture, projective rendering of the planar track bed
from a known trajectory, decoy match generation reproducing the
self-similarity failure mode, and synthetic tag sightings. Every generator
is a pure function of (seed, parameters): datasets are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import kernels
from .errors import DegeneratePointError
from .geometry import Pose, camera_orientation, euler_zyx
from .image import CameraModel, Image, PixelPoint, compensate_rotation
from .epipolar import MatchCandidateSet


# ---------------------------------------------------------------------------
# Ballast texture


def _tileable_value_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    """One octave of bilinear value noise that wraps at the borders."""
    grid = rng.random((cells, cells))
    pos = np.arange(size) * (cells / size)
    i0 = pos.astype(int) % cells
    i1 = (i0 + 1) % cells
    f = pos - np.floor(pos)
    g00 = grid[np.ix_(i0, i0)]
    g01 = grid[np.ix_(i0, i1)]
    g10 = grid[np.ix_(i1, i0)]
    g11 = grid[np.ix_(i1, i1)]
    fy = f[:, None]
    fx = f[None, :]
    return (
        g00 * (1 - fx) * (1 - fy)
        + g01 * fx * (1 - fy)
        + g10 * (1 - fx) * fy
        + g11 * fx * fy
    )


def _stone_motif(rng: np.random.Generator, size: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """A small stamped 'stone': soft disc shading plus noise, with alpha."""
    y, x = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    r = np.hypot(x - c, y - c) / c
    alpha = np.clip(1.0 - r, 0.0, 1.0) ** 1.5
    shade = 0.35 + 0.5 * np.clip(1.0 - r * r, 0.0, 1.0) + 0.15 * rng.random((size, size))
    return shade, alpha * 0.6


def gen_ballast_texture(
    seed: int, size: int = 1024, octaves: int = 5, motif_period: int = 64
) -> Image:
    """Multi-octave value noise with repeated stamped stone motifs.

    The periodic stamps create genuine descriptor ambiguity (the property
    under test is self-similarity, not photorealism). The texture tiles
    seamlessly so arbitrarily long runs can wrap around it.
    """
    if size < 256:
        raise ValueError("texture size must be >= 256")
    rng = np.random.default_rng(seed)
    acc = np.zeros((size, size))
    amp_total = 0.0
    for o in range(octaves):
        cells = 8 << o
        if cells > size:
            break
        amp = 0.5**o
        acc += amp * _tileable_value_noise(rng, size, cells)
        amp_total += amp
    # rank-normalize to a uniform histogram on [0.2, 0.8]
    flat = acc.ravel()
    ranks = np.empty(flat.size, dtype=np.float64)
    ranks[np.argsort(flat, kind="stable")] = np.arange(flat.size)
    tex = (0.2 + 0.6 * ranks / (flat.size - 1)).reshape(size, size)
    # periodic stone stamps
    motif, alpha = _stone_motif(rng)
    ms = motif.shape[0]
    for gy in range(0, size, motif_period):
        for gx in range(0, size, motif_period):
            ys = (np.arange(ms) + gy) % size
            xs = (np.arange(ms) + gx) % size
            region = tex[np.ix_(ys, xs)]
            tex[np.ix_(ys, xs)] = region * (1.0 - alpha) + motif * alpha
    return Image.from_array(np.clip(tex, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Rendering


def render_view(
    texture: Image,
    world_scale: float,
    position: np.ndarray,
    r_wc: np.ndarray,
    cam: CameraModel,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Image, np.ndarray]:
    """Back-project every pixel to the z=0 plane and sample the texture.

    ``r_wc`` maps world coordinates into the camera frame; rays missing the
    plane produce masked zero pixels. Additive Gaussian intensity noise is
    applied inside the valid region only, clipped to [0, 1].
    """
    out, mask = kernels.render_plane(
        np.ascontiguousarray(texture.data),
        float(world_scale),
        np.ascontiguousarray(r_wc, dtype=np.float64),
        np.ascontiguousarray(position, dtype=np.float64),
        cam.fx,
        cam.fy,
        cam.c_x,
        cam.c_y,
        cam.width,
        cam.height,
    )
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        out = out + noise_sigma * rng.standard_normal(out.shape)
        out = np.clip(out, 0.0, 1.0)
        out *= mask
    return Image(width=cam.width, height=cam.height, data=out), mask.astype(bool)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True)
class Segment:
    duration: float
    speed: float
    yaw_rate: float = 0.0

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("segment duration must be positive")


@dataclass(frozen=True)
class TrajectorySpec:
    segments: tuple
    frame_rate: float
    camera: CameraModel
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.frame_rate <= 0.0:
            raise ValueError("frame_rate must be positive")
        if self.noise < 0.0:
            raise ValueError("noise must be >= 0")
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("need at least one segment")


@dataclass(frozen=True)
class GroundTruthRecord:
    t: float
    x: float
    y: float
    heading: float
    v_l: float
    v_s: float
    dy_px: float
    dx_px: float
    aliasing: bool = False


def mouse_camera_rotation(cam: CameraModel, heading: float) -> np.ndarray:
    """World-to-camera rotation of the physically mounted track camera."""
    return cam.r_rect @ camera_orientation(heading, math.pi / 2.0)


def integrate_trajectory(spec: TrajectorySpec) -> list[tuple[float, float, float, float, float]]:
    """Per-frame (t, x, y, heading, speed), exact for piecewise-constant
    speed and yaw rate."""
    dt = 1.0 / spec.frame_rate
    total = sum(s.duration for s in spec.segments)
    n_frames = int(round(total * spec.frame_rate)) + 1
    bounds = np.cumsum([s.duration for s in spec.segments])
    out = [(0.0, 0.0, 0.0, 0.0, spec.segments[0].speed)]
    x = y = theta = 0.0
    for k in range(1, n_frames):
        t0 = (k - 1) * dt
        seg = spec.segments[min(np.searchsorted(bounds, t0, side="right"), len(spec.segments) - 1)]
        v, w = seg.speed, seg.yaw_rate
        if abs(w) < 1e-15:
            x += v * math.cos(theta) * dt
            y += v * math.sin(theta) * dt
        else:
            x += v / w * (math.sin(theta + w * dt) - math.sin(theta))
            y += -v / w * (math.cos(theta + w * dt) - math.cos(theta))
        theta += w * dt
        out.append((k * dt, x, y, theta, v))
    return out


def iter_sequence(
    spec: TrajectorySpec, texture: Image, world_scale: float = 0.002
) -> Iterator[tuple[Image, np.ndarray, GroundTruthRecord]]:
    """Stream (frame, validity mask, ground truth) along the trajectory.

    Per-frame noise seeds derive from (seed, frame index) so rendering is
    deterministic regardless of evaluation order.
    """
    cam = spec.camera
    poses = integrate_trajectory(spec)
    alias_limit = 0.45 * min(cam.width, cam.height)
    prev = None
    for k, (t, x, y, theta, v) in enumerate(poses):
        r_wc = mouse_camera_rotation(cam, theta)
        pos = np.array([x, y, cam.mount_height])
        rng = np.random.default_rng([spec.seed, k]) if spec.noise > 0 else None
        frame, mask = render_view(
            texture, world_scale, pos, r_wc, cam, noise_sigma=spec.noise, rng=rng
        )
        dx_px = dy_px = 0.0
        if prev is not None:
            r_top = camera_orientation(theta, math.pi / 2.0)
            d_cam = r_top @ (pos - prev)
            dx_px = -cam.fx * d_cam[0] / cam.mount_height
            dy_px = -cam.fy * d_cam[1] / cam.mount_height
        rec = GroundTruthRecord(
            t=t,
            x=x,
            y=y,
            heading=theta,
            v_l=v,
            v_s=0.0,
            dy_px=dy_px,
            dx_px=dx_px,
            aliasing=math.hypot(dx_px, dy_px) > alias_limit,
        )
        prev = pos
        yield frame, mask, rec


def gen_sequence(
    spec: TrajectorySpec, texture: Image, world_scale: float = 0.002
) -> tuple[list[Image], list[GroundTruthRecord]]:
    frames = []
    records = []
    for frame, _mask, rec in iter_sequence(spec, texture, world_scale):
        frames.append(frame)
        records.append(rec)
    return frames, records


# ---------------------------------------------------------------------------
# Decoy match generation (self-similarity failure mode)


def relative_camera_motion(
    gt0: GroundTruthRecord, gt1: GroundTruthRecord, cam: CameraModel
) -> tuple[np.ndarray, np.ndarray]:
    """(R_rel, camera motion direction in frame-0 coordinates).

    ``R_rel`` maps frame-0 camera coordinates to frame-1:
    ``x1 = R_rel x0 + t``.
    """
    r0 = mouse_camera_rotation(cam, gt0.heading)
    r1 = mouse_camera_rotation(cam, gt1.heading)
    c0 = np.array([gt0.x, gt0.y, cam.mount_height])
    c1 = np.array([gt1.x, gt1.y, cam.mount_height])
    r_rel = r1 @ r0.T
    motion = r0 @ (c1 - c0)
    n = np.linalg.norm(motion)
    if n > 0:
        motion = motion / n
    return r_rel, motion


@dataclass(frozen=True)
class DecoyInfo:
    r_rel: np.ndarray
    t_motion: np.ndarray  # camera motion direction, frame-0 coordinates
    true_ends: tuple  # compensated true end PixelPoints, aligned with candidates


def gen_match_candidates_with_decoys(
    gt0: GroundTruthRecord,
    gt1: GroundTruthRecord,
    cam: CameraModel,
    n_true: int,
    n_decoys: int,
    decoy_offline_px: float,
    seed: int = 0,
    depth_range: tuple[float, float] = (4.0, 40.0),
) -> tuple[list[MatchCandidateSet], DecoyInfo]:
    """Correspondences consistent with the ground-truth motion plus, per
    query, near-equal-distance decoys displaced off the epipolar line.

    3D points float freely in the frustum (with depth spread) so the flow
    is non-degenerate for pose recovery; decoys are placed perpendicular to
    the rotation-compensated flow line, at >= ``decoy_offline_px``.
    """
    if n_decoys > 0 and decoy_offline_px <= 0.0:
        raise ValueError("decoy_offline_px must be positive")
    rng = np.random.default_rng(seed)
    r_rel, _ = relative_camera_motion(gt0, gt1, cam)
    r0 = mouse_camera_rotation(cam, gt0.heading)
    r1 = mouse_camera_rotation(cam, gt1.heading)
    c0 = np.array([gt0.x, gt0.y, cam.mount_height])
    c1 = np.array([gt1.x, gt1.y, cam.mount_height])
    margin = 20.0
    sets = []
    true_ends = []
    attempts = 0
    while len(sets) < n_true and attempts < n_true * 200:
        attempts += 1
        u = rng.uniform(margin, cam.width - margin)
        v = rng.uniform(margin, cam.height - margin)
        z = rng.uniform(*depth_range)
        p_cam0 = z * np.array([(u - cam.c_x) / cam.fx, (v - cam.c_y) / cam.fy, 1.0])
        x_world = c0 + r0.T @ p_cam0
        p_cam1 = r1 @ (x_world - c1)
        if p_cam1[2] <= 0.1:
            continue
        u1 = cam.c_x + cam.fx * p_cam1[0] / p_cam1[2]
        v1 = cam.c_y + cam.fy * p_cam1[1] / p_cam1[2]
        if not (margin <= u1 < cam.width - margin and margin <= v1 < cam.height - margin):
            continue
        start = PixelPoint(u=u, v=v)
        end_raw = PixelPoint(u=u1, v=v1)
        try:
            end_comp = compensate_rotation(end_raw, cam, r_rel)
        except DegeneratePointError:
            continue
        ku, kv = end_comp.u - start.u, end_comp.v - start.v
        norm = math.hypot(ku, kv)
        if norm < 1e-6:
            continue
        nu, nv = -kv / norm, ku / norm
        base = 0.5
        eps = 0.05
        entries = [(end_raw, base + rng.uniform(-eps, eps))]
        for _ in range(n_decoys):
            off = (decoy_offline_px + rng.uniform(0.0, 2.0)) * (
                1.0 if rng.random() < 0.5 else -1.0
            )
            along = rng.uniform(-0.2, 0.2) * norm
            du = end_comp.u + off * nu + along * ku / norm
            dv = end_comp.v + off * nv + along * kv / norm
            try:
                decoy_raw = compensate_rotation(
                    PixelPoint(u=du, v=dv), cam, r_rel.T
                )
            except DegeneratePointError:
                continue
            entries.append((decoy_raw, base + rng.uniform(-eps, eps)))
        entries.sort(key=lambda e: e[1])
        sets.append(MatchCandidateSet(query=start, candidates=tuple(entries)))
        true_ends.append(end_comp)
    _, t_motion = relative_camera_motion(gt0, gt1, cam)
    return sets, DecoyInfo(r_rel=r_rel, t_motion=t_motion, true_ends=tuple(true_ends))


# ---------------------------------------------------------------------------
# Tag sightings


@dataclass(frozen=True)
class TagPlacement:
    tag_id: int
    pose_world: Pose
    side: float


@dataclass(frozen=True)
class TagSighting:
    t: float
    tag_id: int
    corners: tuple  # 4 PixelPoints
    pose_world: Pose
    side: float


def place_tags_straight_track(
    spacing: float,
    count: int,
    lateral: float,
    height: float,
    side: float,
    first_at: float = None,
) -> list[TagPlacement]:
    """Tags along a straight +x track, facing the approaching train."""
    if first_at is None:
        first_at = spacing
    # tag frame: x left of track, y down, z pointing back toward the train
    r = np.column_stack([[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [-1.0, 0.0, 0.0]])
    out = []
    for i in range(count):
        pos = np.array([first_at + i * spacing, lateral, height])
        out.append(TagPlacement(tag_id=i + 1, pose_world=Pose(r, pos), side=side))
    return out


def tag_corner_world(placement: TagPlacement) -> np.ndarray:
    h = placement.side / 2.0
    local = np.array(
        [[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]]
    )  # TL TR BR BL in (x right-as-seen, y down)
    return placement.pose_world.transform(local)


def gen_tag_sightings(
    poses: list[tuple[float, float, float, float, float]],
    tag_cam: CameraModel,
    cam_height: float,
    tags: list[TagPlacement],
    corner_noise_px: float = 0.0,
    seed: int = 0,
    range_min: float = 4.0,
    range_max: float = 12.0,
) -> list[TagSighting]:
    """Project tag corners into a forward-looking camera along the run.

    ``poses`` are (t, x, y, heading, v) rows from the trajectory
    integration. A sighting is emitted whenever all four corners fall
    inside the frame within the distance window.
    """
    rng = np.random.default_rng(seed)
    margin = 4.0
    out = []
    for t, x, y, theta, _v in poses:
        c = np.array([x, y, cam_height])
        r_wc = camera_orientation(theta, 0.0)
        for tag in tags:
            world = tag_corner_world(tag)
            cams = (world - c) @ r_wc.T
            if np.any(cams[:, 2] < range_min) or np.any(cams[:, 2] > range_max):
                continue
            us = tag_cam.c_x + tag_cam.fx * cams[:, 0] / cams[:, 2]
            vs = tag_cam.c_y + tag_cam.fy * cams[:, 1] / cams[:, 2]
            if (
                us.min() < margin
                or us.max() >= tag_cam.width - margin
                or vs.min() < margin
                or vs.max() >= tag_cam.height - margin
            ):
                continue
            noise = (
                corner_noise_px * rng.standard_normal((4, 2))
                if corner_noise_px > 0.0
                else np.zeros((4, 2))
            )
            corners = tuple(
                PixelPoint(u=float(us[i] + noise[i, 0]), v=float(vs[i] + noise[i, 1]))
                for i in range(4)
            )
            out.append(
                TagSighting(
                    t=t,
                    tag_id=tag.tag_id,
                    corners=corners,
                    pose_world=tag.pose_world,
                    side=tag.side,
                )
            )
    return out
