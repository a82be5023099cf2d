"""Optical correlation unit: large-template SSD matching in the rectified
track view with banded search, sub-pixel gradient refinement, metric
velocity conversion and keyframe management.

Displacement convention: the displacement (x_p, y_p) is where the template
content of the reference frame reappears in the current frame, i.e. the
current window ``cur[ty+y_p : ..., tx+x_p : ...]`` matches the reference
template. Forward train motion produces positive y displacement in the
rectified view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import InsufficientOverlapError, NoTextureError
from .image import CameraModel, Image


@dataclass(frozen=True)
class TemplateSpec:
    """Template rectangle in the rectified frame."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("template must be at least 16x16 px")
        if self.x < 0 or self.y < 0:
            raise ValueError("template origin must be non-negative")


@dataclass(frozen=True)
class SearchBand:
    """Search window around a predicted displacement."""

    center_x: int
    center_y: int
    half_width_x: int
    half_width_y: int

    def __post_init__(self):
        if self.half_width_x < 1 or self.half_width_y < 1:
            raise ValueError("band half widths must be >= 1")


@dataclass(frozen=True)
class DisplacementMeasurement:
    """Template shift relative to the reference keyframe."""

    x_p: int
    y_p: int
    dx: float
    dy: float
    n_contrib: int
    sigma_z_px: float
    keyframe_id: int
    valid: bool = True

    def __post_init__(self):
        if abs(self.dx) >= 1.0 or abs(self.dy) >= 1.0:
            raise ValueError("sub-pixel correction must lie in (-1, 1)")
        if self.sigma_z_px < 0.0 or self.n_contrib < 0:
            raise ValueError("sigma_z_px and n_contrib must be non-negative")
        if self.n_contrib <= 1 and self.sigma_z_px != 0.0:
            raise ValueError("sigma_z_px must be 0 for n_contrib <= 1")

    @property
    def total_x(self) -> float:
        return self.x_p + self.dx

    @property
    def total_y(self) -> float:
        return self.y_p + self.dy


@dataclass(frozen=True)
class VelocityEstimate:
    v_l: float
    v_s: float
    sigma_vz: float

    def __post_init__(self):
        if not (
            math.isfinite(self.v_l)
            and math.isfinite(self.v_s)
            and math.isfinite(self.sigma_vz)
        ):
            raise ValueError("velocity estimate must be finite")
        if self.sigma_vz < 0.0:
            raise ValueError("sigma_vz must be >= 0")


class SubpixelResult(NamedTuple):
    dx: float
    dy: float
    n_contrib: int
    sigma_z_px: float


def ssd_match(
    reference: Image,
    template: TemplateSpec,
    current: Image,
    band: SearchBand,
    ref_mask: Optional[np.ndarray] = None,
    cur_mask: Optional[np.ndarray] = None,
) -> tuple[int, int, np.ndarray]:
    """Integer displacement minimizing the masked SSD inside the band.

    Ties are broken toward the smallest (y_p, x_p) lexicographically; the
    per-pixel mean cost surface is returned for diagnostics (np.inf marks
    candidates with fewer than 25% valid template pixels).
    """
    if template.x + template.width > reference.width or (
        template.y + template.height > reference.height
    ):
        raise ValueError("template exceeds the reference frame")
    if (reference.width, reference.height) != (current.width, current.height):
        raise ValueError("reference and current frames differ in geometry")
    if ref_mask is None:
        ref_mask = np.ones((reference.height, reference.width), dtype=np.uint8)
    if cur_mask is None:
        cur_mask = np.ones((current.height, current.width), dtype=np.uint8)
    cost, count = kernels.ssd_band(
        np.ascontiguousarray(reference.data),
        np.ascontiguousarray(current.data),
        np.ascontiguousarray(ref_mask, dtype=np.uint8),
        np.ascontiguousarray(cur_mask, dtype=np.uint8),
        template.x,
        template.y,
        template.width,
        template.height,
        band.center_x,
        band.center_y,
        band.half_width_x,
        band.half_width_y,
    )
    min_count = 0.25 * template.width * template.height
    with np.errstate(invalid="ignore", divide="ignore"):
        surface = np.where(count >= min_count, cost / np.maximum(count, 1), np.inf)
    best = surface.min()
    if not np.isfinite(best):
        raise InsufficientOverlapError(
            "fewer than 25% of template pixels valid at every candidate"
        )
    # argwhere scans row-major: first hit is the smallest (y, x) tie-break
    i, j = np.argwhere(surface == best)[0]
    x_p = band.center_x - band.half_width_x + int(j)
    y_p = band.center_y - band.half_width_y + int(i)
    return x_p, y_p, surface


def subpixel_refine(
    reference: Image,
    template: TemplateSpec,
    current: Image,
    int_disp: tuple[int, int],
    eps_g: float,
    ref_mask: Optional[np.ndarray] = None,
    cur_mask: Optional[np.ndarray] = None,
) -> SubpixelResult:
    """First-order sub-pixel correction of an integer template match.

    Every template pixel whose gradient magnitude exceeds ``eps_g``
    contributes its linearized brightness-constancy equation G.dp = -dI;
    the correction (dx, dy) solves the stacked system in least squares
    (exact on affine intensity fields). The per-pixel projections of the
    temporal difference onto the gradient direction are kept as individual
    motion responses: their count is ``n_contrib`` and the spread of their
    y components is ``sigma_z_px``, the along-track error that is otherwise
    unobservable. Responses outside the (-1, 1) validity region of the
    Taylor model are discarded.
    """
    if eps_g <= 0.0:
        raise ValueError("eps_g must be positive")
    x_p, y_p = int_disp
    tx, ty, tw, th = template.x, template.y, template.width, template.height
    ref = reference.data
    cur = current.data
    ch, cw = cur.shape

    gy_full, gx_full = np.gradient(ref)
    gx = gx_full[ty : ty + th, tx : tx + tw]
    gy = gy_full[ty : ty + th, tx : tx + tw]
    g2 = gx * gx + gy * gy

    # clip the current window against the frame
    x_lo, y_lo = tx + x_p, ty + y_p
    sx0, sy0 = max(0, -x_lo), max(0, -y_lo)
    sx1, sy1 = min(tw, cw - x_lo), min(th, ch - y_lo)
    inside = np.zeros((th, tw), dtype=bool)
    if sx1 > sx0 and sy1 > sy0:
        inside[sy0:sy1, sx0:sx1] = True
    diff = np.zeros((th, tw))
    if sx1 > sx0 and sy1 > sy0:
        diff[sy0:sy1, sx0:sx1] = (
            cur[y_lo + sy0 : y_lo + sy1, x_lo + sx0 : x_lo + sx1]
            - ref[ty + sy0 : ty + sy1, tx + sx0 : tx + sx1]
        )
    valid = inside & (g2 > eps_g * eps_g)
    if ref_mask is not None:
        valid &= ref_mask[ty : ty + th, tx : tx + tw].astype(bool)
    if cur_mask is not None:
        shifted = np.zeros((th, tw), dtype=bool)
        if sx1 > sx0 and sy1 > sy0:
            shifted[sy0:sy1, sx0:sx1] = cur_mask[
                y_lo + sy0 : y_lo + sy1, x_lo + sx0 : x_lo + sx1
            ].astype(bool)
        valid &= shifted

    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(valid, -diff / np.maximum(g2, 1e-300), 0.0)
    px = scale * gx
    py = scale * gy
    valid &= (np.abs(px) < 1.0) & (np.abs(py) < 1.0)
    n = int(valid.sum())
    if n == 0:
        raise NoTextureError("no template pixel passed the gradient gate")
    # stacked normal equations of G.dp = -dI over the contributing pixels;
    # lstsq handles the rank-1 case (single-direction texture) by the
    # minimum-norm solution
    a = np.array(
        [
            [float((gx[valid] ** 2).sum()), float((gx[valid] * gy[valid]).sum())],
            [float((gx[valid] * gy[valid]).sum()), float((gy[valid] ** 2).sum())],
        ]
    )
    b = -np.array(
        [float((gx[valid] * diff[valid]).sum()), float((gy[valid] * diff[valid]).sum())]
    )
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    lim = 1.0 - 1e-9  # sub-pixel corrections live in (-1, 1) by contract
    dx = float(np.clip(sol[0], -lim, lim))
    dy = float(np.clip(sol[1], -lim, lim))
    sigma = float(py[valid].std()) if n > 1 else 0.0
    return SubpixelResult(dx=dx, dy=dy, n_contrib=n, sigma_z_px=sigma)


def _metric_scale(cam: CameraModel) -> tuple[float, float]:
    """Meters-per-pixel-per-frame factors (forward, sideways)."""
    sy = cam.mount_height * cam.p_y / (cam.f * cam.frame_interval)
    sx = cam.mount_height * cam.p_x / (cam.f * cam.frame_interval)
    return sy, sx


def pixel_to_velocity(
    dx_px: float,
    dy_px: float,
    sigma_z_px: float,
    n_contrib: int,
    cam: CameraModel,
) -> VelocityEstimate:
    """Similar-triangles conversion of a pixel displacement to m/s."""
    sy, sx = _metric_scale(cam)
    return VelocityEstimate(
        v_l=sy * dy_px,
        v_s=sx * dx_px,
        sigma_vz=sy * sigma_z_px / math.sqrt(max(n_contrib, 1)),
    )


def displacement_to_velocity(
    meas: DisplacementMeasurement, cam: CameraModel
) -> VelocityEstimate:
    return pixel_to_velocity(
        meas.total_x, meas.total_y, meas.sigma_z_px, meas.n_contrib, cam
    )


# ---------------------------------------------------------------------------
# Keyframe processing


@dataclass(frozen=True)
class KeyframePolicy:
    max_frames: int = 4
    velocity_threshold_px: float = math.inf  # per-frame pixel travel
    band_half_x: int = 4
    band_half_y: int = 4
    eps_g: float = 0.02
    refine: bool = True

    def __post_init__(self):
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")


@dataclass(frozen=True)
class KeyframeState:
    """Frozen reference frame plus matching bookkeeping."""

    reference: Image
    mask: Optional[np.ndarray]
    template: TemplateSpec
    keyframe_id: int
    max_frames: int
    frames_used: int = 0
    acc_x: float = 0.0
    acc_y: float = 0.0
    last_dx: float = 0.0
    last_dy: float = 0.0

    def __post_init__(self):
        if self.frames_used > self.max_frames:
            raise ValueError("frames_used exceeds max_frames")


@dataclass(frozen=True)
class MouseFrameResult:
    meas: DisplacementMeasurement
    delta_x: float
    delta_y: float
    switched: bool


def start_keyframe(
    frame: Image,
    template: TemplateSpec,
    keyframe_id: int,
    policy: KeyframePolicy,
    mask: Optional[np.ndarray] = None,
) -> KeyframeState:
    return KeyframeState(
        reference=frame,
        mask=mask,
        template=template,
        keyframe_id=keyframe_id,
        max_frames=policy.max_frames,
    )


def _would_exit(state: KeyframeState, policy: KeyframePolicy, nx: float, ny: float) -> bool:
    """True when the next predicted search window leaves the warped region."""
    t = state.template
    x0 = t.x + round(nx) - policy.band_half_x - 1
    y0 = t.y + round(ny) - policy.band_half_y - 1
    x1 = t.x + round(nx) + t.width + policy.band_half_x + 1
    y1 = t.y + round(ny) + t.height + policy.band_half_y + 1
    return x0 < 0 or y0 < 0 or x1 > state.reference.width or y1 > state.reference.height


def keyframe_update(
    state: KeyframeState,
    new_rectified: Image,
    policy: KeyframePolicy,
    new_mask: Optional[np.ndarray] = None,
) -> tuple[MouseFrameResult, KeyframeState]:
    """Match the frozen keyframe template against a new rectified frame.

    The accumulated displacement is measured from the keyframe; the
    per-frame displacement is the difference of consecutive accumulated
    values, so brightness-noise error enters the distance integral once per
    keyframe instead of once per frame.
    """
    pred_x = state.acc_x + state.last_dx
    pred_y = state.acc_y + state.last_dy
    band = SearchBand(
        center_x=round(pred_x),
        center_y=round(pred_y),
        half_width_x=policy.band_half_x,
        half_width_y=policy.band_half_y,
    )
    x_p, y_p, _ = ssd_match(
        state.reference, state.template, new_rectified, band, state.mask, new_mask
    )
    valid = True
    if policy.refine:
        try:
            sub = subpixel_refine(
                state.reference,
                state.template,
                new_rectified,
                (x_p, y_p),
                policy.eps_g,
                state.mask,
                new_mask,
            )
        except NoTextureError:
            # integer fallback with inflated uncertainty
            sub = SubpixelResult(dx=0.0, dy=0.0, n_contrib=0, sigma_z_px=0.0)
            valid = False
    else:
        sub = SubpixelResult(dx=0.0, dy=0.0, n_contrib=0, sigma_z_px=0.0)
    meas = DisplacementMeasurement(
        x_p=x_p,
        y_p=y_p,
        dx=sub.dx,
        dy=sub.dy,
        n_contrib=sub.n_contrib,
        sigma_z_px=sub.sigma_z_px,
        keyframe_id=state.keyframe_id,
        valid=valid,
    )
    acc_x = x_p + sub.dx
    acc_y = y_p + sub.dy
    delta_x = acc_x - state.acc_x
    delta_y = acc_y - state.acc_y
    frames_used = state.frames_used + 1
    speed_px = math.hypot(delta_x, delta_y)
    switch = (
        frames_used >= state.max_frames
        or _would_exit(state, policy, acc_x + delta_x, acc_y + delta_y)
        or speed_px > policy.velocity_threshold_px
    )
    if switch:
        new_state = KeyframeState(
            reference=new_rectified,
            mask=new_mask,
            template=state.template,
            keyframe_id=state.keyframe_id + 1,
            max_frames=policy.max_frames,
            last_dx=delta_x,
            last_dy=delta_y,
        )
    else:
        new_state = replace(
            state,
            frames_used=frames_used,
            acc_x=acc_x,
            acc_y=acc_y,
            last_dx=delta_x,
            last_dy=delta_y,
        )
    return MouseFrameResult(meas=meas, delta_x=delta_x, delta_y=delta_y, switched=switch), new_state


@dataclass
class MouseStepRecord:
    frame_idx: int
    keyframe_id: int
    meas: DisplacementMeasurement
    delta_x: float
    delta_y: float
    velocity: VelocityEstimate
    switched: bool


class TrainMouse:
    """Sequential driver feeding rectified frames through keyframe matching."""

    def __init__(self, cam: CameraModel, template: TemplateSpec, policy: KeyframePolicy):
        self.cam = cam
        self.template = template
        self.policy = policy
        self.state: Optional[KeyframeState] = None
        self.frame_idx = -1
        self.switch_count = 0

    def process(self, rectified: Image, mask: Optional[np.ndarray] = None) -> MouseStepRecord:
        self.frame_idx += 1
        if self.state is None:
            self.state = start_keyframe(
                rectified, self.template, 0, self.policy, mask
            )
            meas = DisplacementMeasurement(
                x_p=0, y_p=0, dx=0.0, dy=0.0, n_contrib=0, sigma_z_px=0.0, keyframe_id=0
            )
            return MouseStepRecord(
                frame_idx=0,
                keyframe_id=0,
                meas=meas,
                delta_x=0.0,
                delta_y=0.0,
                velocity=VelocityEstimate(0.0, 0.0, 0.0),
                switched=False,
            )
        result, self.state = keyframe_update(self.state, rectified, self.policy, mask)
        if result.switched:
            self.switch_count += 1
        vel = pixel_to_velocity(
            result.delta_x,
            result.delta_y,
            result.meas.sigma_z_px,
            result.meas.n_contrib,
            self.cam,
        )
        return MouseStepRecord(
            frame_idx=self.frame_idx,
            keyframe_id=result.meas.keyframe_id,
            meas=result.meas,
            delta_x=result.delta_x,
            delta_y=result.delta_y,
            velocity=vel,
            switched=result.switched,
        )
