"""SfM unit: deterministic corner detection, ambiguity-aware matching,
epipole prediction and gating, sampling-free eight-point pose recovery,
epipole least squares and the planar covariance of the result.

Nothing in this module draws random samples; identical inputs produce
identical outputs, which is the binding certification constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    AmbiguousPoseError,
    DegenerateFlowError,
    DegeneratePointError,
    InsufficientFlowError,
    NoEpipoleError,
    ParallelFlowError,
)
from . import kernels
from .image import CameraModel, Image, PixelPoint, compensate_rotation


@dataclass(frozen=True)
class FlowVector:
    """Rotation-compensated optical flow segment."""

    p_s: PixelPoint
    p_e: PixelPoint

    def __post_init__(self):
        if math.hypot(self.p_e.u - self.p_s.u, self.p_e.v - self.p_s.v) <= 0.0:
            raise ValueError("flow vector has zero length")


@dataclass(frozen=True)
class MatchCandidateSet:
    """A query corner and its candidate matches, ascending by distance."""

    query: PixelPoint
    candidates: tuple  # of (PixelPoint, float)

    def __post_init__(self):
        cands = tuple(self.candidates)
        dists = [d for _, d in cands]
        if any(b < a for a, b in zip(dists, dists[1:])):
            raise ValueError("candidates must be sorted ascending by distance")
        object.__setattr__(self, "candidates", cands)


@dataclass(frozen=True)
class PoseDelta:
    """Frame-to-frame pose with planar covariance."""

    r: np.ndarray
    t_dir: np.ndarray
    epipole: Optional[PixelPoint]
    cov_xy: np.ndarray
    sigma_z: float = 0.0

    def __post_init__(self):
        cov = np.asarray(self.cov_xy, dtype=float)
        if cov.shape != (2, 2) or np.abs(cov - cov.T).max() > 1e-12:
            raise ValueError("cov_xy must be symmetric 2x2")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("cov_xy must be positive semidefinite")
        t = np.asarray(self.t_dir, dtype=float)
        if abs(np.linalg.norm(t) - 1.0) > 1e-9:
            raise ValueError("t_dir must be a unit vector")


# ---------------------------------------------------------------------------
# Corner detection


def harris_response(img: Image, k: float = 0.04) -> np.ndarray:
    """Harris corner score (structure tensor smoothed with a binomial
    window); see the kernel backends for the exact stencil."""
    return kernels.harris_score(np.ascontiguousarray(img.data), k)


def detect_corners(
    img: Image, max_count: int = 200, rel_quality: float = 0.01
) -> list[PixelPoint]:
    """Harris corners with fixed-radius non-maximum suppression.

    ``rel_quality`` gates candidates at a fraction of the strongest
    response (the absolute Harris scale varies with image contrast).
    Fully deterministic: candidates are ordered by (score desc, y asc,
    x asc) and greedily suppressed within a 5 px radius.
    """
    score = harris_response(img)
    peak = float(score.max())
    if peak <= 0.0:
        return []
    local_max = kernels.max_filter2d(score, 5)
    cand = np.argwhere((score >= local_max) & (score > rel_quality * peak))
    if cand.size == 0:
        return []
    vals = score[cand[:, 0], cand[:, 1]]
    order = np.lexsort((cand[:, 1], cand[:, 0], -vals))
    cand = cand[order]
    picked: list[tuple[int, int]] = []
    out: list[PixelPoint] = []
    for y, x in cand:
        ok = all((y - py) ** 2 + (x - px) ** 2 > 25 for py, px in picked)
        if ok:
            picked.append((int(y), int(x)))
            out.append(PixelPoint(u=float(x), v=float(y)))
            if len(out) >= max_count:
                break
    return out


# ---------------------------------------------------------------------------
# Candidate matching

_PATCH_HALF = 5  # 11x11 descriptor patch


def _patches(img: Image, corners: list[PixelPoint]):
    """Normalized 11x11 patches; corners too close to the border are dropped."""
    h, w = img.data.shape
    kept = []
    rows = []
    for p in corners:
        x, y = int(round(p.u)), int(round(p.v))
        if (
            x - _PATCH_HALF < 0
            or y - _PATCH_HALF < 0
            or x + _PATCH_HALF >= w
            or y + _PATCH_HALF >= h
        ):
            continue
        patch = img.data[
            y - _PATCH_HALF : y + _PATCH_HALF + 1, x - _PATCH_HALF : x + _PATCH_HALF + 1
        ].ravel()
        patch = patch - patch.mean()
        norm = np.linalg.norm(patch)
        if norm > 1e-12:
            patch = patch / norm
        else:
            patch = np.zeros_like(patch)
        kept.append(p)
        rows.append(patch)
    if not rows:
        return [], np.zeros((0, (2 * _PATCH_HALF + 1) ** 2))
    return kept, np.stack(rows)


def match_candidates(
    corners_t: list[PixelPoint],
    corners_t1: list[PixelPoint],
    img_t: Image,
    img_t1: Image,
    k: int = 4,
) -> list[MatchCandidateSet]:
    """k nearest patch descriptors per query, preserving ambiguity.

    Committing to the single best candidate is exactly the failure mode on
    self-similar track beds, so the whole candidate set is returned.
    """
    if not corners_t or not corners_t1:
        raise ValueError("corner lists must be non-empty")
    qs, a = _patches(img_t, corners_t)
    cs, b = _patches(img_t1, corners_t1)
    out = []
    if not qs or not cs:
        return out
    d = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(d, 0.0, out=d)
    bu = np.array([p.u for p in cs])
    bv = np.array([p.v for p in cs])
    for i, q in enumerate(qs):
        order = np.lexsort((bu, bv, d[i]))[:k]
        cands = tuple((cs[j], float(d[i, j])) for j in order)
        out.append(MatchCandidateSet(query=q, candidates=cands))
    return out


# ---------------------------------------------------------------------------
# Epipole prediction and match gating


@dataclass(frozen=True)
class Epipole:
    """Predicted epipole; at T_z -> 0 only the flow direction is pinned."""

    point: Optional[PixelPoint]
    at_infinity: bool
    direction: np.ndarray  # unit image-plane direction (toward the epipole)
    sign_tz: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", d)


def predict_epipole(t, cam: CameraModel) -> Epipole:
    """Epipole from the camera-motion direction in camera coordinates.

    ``t`` is (T_x, T_z) from the correlation unit (planar-motion reading,
    T_y = 0) or the full (T_x, T_y, T_z) from the rectification geometry.
    """
    t = np.asarray(t, dtype=float)
    if t.shape == (2,):
        t = np.array([t[0], 0.0, t[1]])
    elif t.shape != (3,):
        raise ValueError("translation must have 2 or 3 components")
    norm = np.linalg.norm(t)
    if norm <= 0.0:
        raise NoEpipoleError("zero translation has no epipole (pure rotation)")
    if abs(t[2]) <= 1e-9 * norm:
        d = np.array([t[0] * cam.fx, t[1] * cam.fy])
        d = d / np.linalg.norm(d)
        return Epipole(point=None, at_infinity=True, direction=d, sign_tz=0.0)
    u = cam.c_x + cam.fx * t[0] / t[2]
    v = cam.c_y + cam.fy * t[1] / t[2]
    d = np.array([u - cam.c_x, v - cam.c_y])
    n = np.linalg.norm(d)
    d = d / n if n > 0 else np.array([1.0, 0.0])
    return Epipole(
        point=PixelPoint(u=u, v=v),
        at_infinity=False,
        direction=d,
        sign_tz=math.copysign(1.0, t[2]),
    )


def _gate_deviation(p_s: PixelPoint, p_e: PixelPoint, epipole: Epipole) -> float:
    """Perpendicular miss distance of the flow line from the epipole, px."""
    ku = p_e.u - p_s.u
    kv = p_e.v - p_s.v
    n = math.hypot(ku, kv)
    if n <= 1e-12:
        return math.inf
    if epipole.at_infinity:
        # lateral miss accumulated over the segment length
        return abs(ku * epipole.direction[1] - kv * epipole.direction[0])
    ex = epipole.point.u - p_s.u
    ey = epipole.point.v - p_s.v
    return abs(ku * ey - kv * ex) / n


def _gate_direction_ok(p_s: PixelPoint, p_e: PixelPoint, epipole: Epipole) -> bool:
    ku = p_e.u - p_s.u
    kv = p_e.v - p_s.v
    if epipole.at_infinity:
        # content flows opposite to the camera's image-plane motion
        return ku * epipole.direction[0] + kv * epipole.direction[1] <= 0.0
    dot = ku * (p_s.u - epipole.point.u) + kv * (p_s.v - epipole.point.v)
    if epipole.sign_tz > 0:
        return dot >= 0.0  # expansion away from the epipole
    return dot <= 0.0


def gate_candidates(
    candidates: list[MatchCandidateSet],
    r_pred: np.ndarray,
    cam: CameraModel,
    epipole: Epipole,
    tol_px: float,
) -> list[list[bool]]:
    """Per-candidate survival mask of the epipole gate (before selection)."""
    if tol_px <= 0.0:
        raise ValueError("tol_px must be positive")
    masks = []
    for cset in candidates:
        row = []
        for cand, _dist in cset.candidates:
            try:
                p_e = compensate_rotation(cand, cam, r_pred)
            except DegeneratePointError:
                row.append(False)
                continue
            dev = _gate_deviation(cset.query, p_e, epipole)
            row.append(dev <= tol_px and _gate_direction_ok(cset.query, p_e, epipole))
        masks.append(row)
    return masks


def filter_flow_by_epipole(
    candidates: list[MatchCandidateSet],
    r_pred: np.ndarray,
    cam: CameraModel,
    epipole: Epipole,
    tol_px: float,
) -> list[FlowVector]:
    """Keep, per query point, the best-descriptor candidate whose
    rotation-compensated flow line passes within ``tol_px`` of the predicted
    epipole with the correct expansion sign. No randomized selection.
    """
    masks = gate_candidates(candidates, r_pred, cam, epipole, tol_px)
    flow = []
    for cset, mask in zip(candidates, masks):
        for (cand, _dist), ok in zip(cset.candidates, mask):
            if ok:
                p_e = compensate_rotation(cand, cam, r_pred)
                flow.append(FlowVector(p_s=cset.query, p_e=p_e))
                break  # candidates sorted ascending: first survivor is best
    if len(flow) < 8:
        raise InsufficientFlowError(
            f"only {len(flow)} flow vectors survived the epipole gate (need 8)"
        )
    return flow


# ---------------------------------------------------------------------------
# Deterministic eight-point pose recovery


def _normalized_coords(flow: list[FlowVector], cam: CameraModel):
    s = np.array([[f.p_s.u, f.p_s.v] for f in flow])
    e = np.array([[f.p_e.u, f.p_e.v] for f in flow])
    x1 = np.column_stack(
        [(s[:, 0] - cam.c_x) / cam.fx, (s[:, 1] - cam.c_y) / cam.fy]
    )
    x2 = np.column_stack(
        [(e[:, 0] - cam.c_x) / cam.fx, (e[:, 1] - cam.c_y) / cam.fy]
    )
    return x1, x2


def _hartley(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    d = np.sqrt(((x - mean) ** 2).sum(axis=1)).mean()
    scale = math.sqrt(2.0) / d if d > 1e-15 else 1.0
    t = np.array(
        [[scale, 0.0, -scale * mean[0]], [0.0, scale, -scale * mean[1]], [0.0, 0.0, 1.0]]
    )
    xh = np.column_stack([x, np.ones(len(x))]) @ t.T
    return xh, t


def _triangulate_depths(x1, x2, r, t):
    """Linear triangulation; returns depths in both cameras."""
    z1 = np.empty(len(x1))
    z2 = np.empty(len(x1))
    p1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    p2 = np.hstack([r, t.reshape(3, 1)])
    for i in range(len(x1)):
        a = np.stack(
            [
                x1[i, 0] * p1[2] - p1[0],
                x1[i, 1] * p1[2] - p1[1],
                x2[i, 0] * p2[2] - p2[0],
                x2[i, 1] * p2[2] - p2[1],
            ]
        )
        _, _, vt = np.linalg.svd(a)
        xh = vt[-1]
        if abs(xh[3]) < 1e-15:
            z1[i] = z2[i] = 0.0
            continue
        pt = xh[:3] / xh[3]
        z1[i] = pt[2]
        z2[i] = (r @ pt + t)[2]
    return z1, z2


def eight_point_pose(
    flow: list[FlowVector], cam: CameraModel
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized eight-point essential-matrix estimate over ALL vectors.

    Returns (R, t_dir) with ``x2 = R x1 + t`` between the calibrated frames
    and ``t_dir`` the unit camera-motion direction in frame-t coordinates.
    The pose candidate is selected by a cheirality vote over triangulated
    points; the wrong-correspondence filtering happened upstream, so no
    sampling is needed here.
    """
    if len(flow) < 8:
        raise DegenerateFlowError(f"need at least 8 flow vectors, got {len(flow)}")
    x1, x2 = _normalized_coords(flow, cam)
    h1, t1 = _hartley(x1)
    h2, t2 = _hartley(x2)
    a = np.column_stack(
        [
            h2[:, 0] * h1[:, 0],
            h2[:, 0] * h1[:, 1],
            h2[:, 0],
            h2[:, 1] * h1[:, 0],
            h2[:, 1] * h1[:, 1],
            h2[:, 1],
            h1[:, 0],
            h1[:, 1],
            np.ones(len(flow)),
        ]
    )
    _, sv, vt = np.linalg.svd(a)
    if sv[7] <= 0.0 or sv[0] / sv[7] > 1e12:
        raise DegenerateFlowError("flow configuration is rank deficient")
    e = vt[-1].reshape(3, 3)
    e = t2.T @ e @ t1
    u, s, vtE = np.linalg.svd(e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vtE) < 0:
        vtE = -vtE
    sig = (s[0] + s[1]) / 2.0
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r_a = u @ w @ vtE
    r_b = u @ w.T @ vtE
    t_vec = u[:, 2] * sig
    x1h = np.column_stack([x1, np.ones(len(x1))])
    x2h = np.column_stack([x2, np.ones(len(x2))])
    best = None
    counts = []
    for r_cand, t_cand in (
        (r_a, t_vec),
        (r_a, -t_vec),
        (r_b, t_vec),
        (r_b, -t_vec),
    ):
        z1, z2 = _triangulate_depths(x1h, x2h, r_cand, t_cand)
        counts.append(int(np.sum((z1 > 0) & (z2 > 0))))
    order = sorted(range(4), key=lambda i: -counts[i])
    if counts[order[0]] == counts[order[1]]:
        raise AmbiguousPoseError(
            f"cheirality vote tied at {counts[order[0]]} points in front"
        )
    best = order[0]
    r_best, t_best = (
        (r_a, t_vec),
        (r_a, -t_vec),
        (r_b, t_vec),
        (r_b, -t_vec),
    )[best]
    t_dir = -r_best.T @ t_best
    t_dir = t_dir / np.linalg.norm(t_dir)
    return r_best, t_dir


# ---------------------------------------------------------------------------
# Epipole least squares (pseudo-inverse) and planar covariance


def _flow_normals(flow: list[FlowVector], unit: bool) -> tuple[np.ndarray, np.ndarray]:
    starts = np.array([[f.p_s.u, f.p_s.v] for f in flow])
    k = np.array([[f.p_e.u - f.p_s.u, f.p_e.v - f.p_s.v] for f in flow])
    n = np.column_stack([-k[:, 1], k[:, 0]])
    if unit:
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
    return n, starts


def epipole_least_squares(flow: list[FlowVector]) -> PixelPoint:
    """Least-squares intersection of all flow lines (pseudo-inverse of the
    stacked line-normal system).
    """
    if len(flow) < 2:
        raise ParallelFlowError("need at least 2 flow vectors")
    n, starts = _flow_normals(flow, unit=True)
    b = np.sum(n * starts, axis=1)
    sv = np.linalg.svd(n, compute_uv=False)
    if sv[1] <= 1e-9 * sv[0]:
        raise ParallelFlowError("all flow lines are parallel")
    x, *_ = np.linalg.lstsq(n, b, rcond=None)
    return PixelPoint(u=float(x[0]), v=float(x[1]))


def epipole_residual(flow: list[FlowVector], point: np.ndarray) -> float:
    """Sum of squared perpendicular distances of ``point`` from all lines."""
    n, starts = _flow_normals(flow, unit=True)
    r = n @ np.asarray(point, dtype=float) - np.sum(n * starts, axis=1)
    return float(np.sum(r * r))


def planar_flow_covariance(
    flow: list[FlowVector],
    x_e: PixelPoint,
    delta_x_px: float,
    cam: CameraModel,
    unit_normals: bool = True,
) -> np.ndarray:
    """Planar covariance from how far the flow lines miss the epipole.

    Each line contributes the outer product of its miss vector scaled from
    pixels to meters by the correlation unit's forward step. With
    ``unit_normals=False`` the raw (segment-length weighted) normals are
    used instead of the geometric unit-normal reading.
    """
    if not flow:
        raise ValueError("flow must be non-empty")
    n, starts = _flow_normals(flow, unit=unit_normals)
    scale = delta_x_px * cam.p_x / cam.f
    miss = np.sum(n * (starts - np.array([x_e.u, x_e.v])), axis=1)
    dp = scale * miss[:, None] * n
    cov = dp.T @ dp / len(flow)
    return (cov + cov.T) / 2.0
