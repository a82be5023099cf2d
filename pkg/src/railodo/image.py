"""Image representation, PGM codec, camera model and projective warping.

Images store luminance as float64 in [0, 1] regardless of the source bit
depth, so gradient thresholds are bit-depth independent. All types are
immutable after construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegeneratePointError, EmptyWarpError, FormatError
from .geometry import is_rotation


@dataclass(frozen=True)
class Image:
    """Row-major grayscale raster with samples in [0, 1]."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.height, self.width):
            raise ValueError(
                f"data shape {data.shape} does not match {self.height}x{self.width}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite samples")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("image samples must lie in [0, 1]")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus mounting geometry and frame timing.

    f: focal length [m]; p_x/p_y: pixel pitch [m/px]; c_x/c_y: principal
    point [px]; width/height: sensor size [px]; mount_height: camera height
    above the rail plane [m]; frame_interval: time between frames [s];
    r_rect: rotation from the top-view orientation to the physical camera
    orientation, used to build the rectifying homography.
    """

    f: float
    p_x: float
    p_y: float
    c_x: float
    c_y: float
    width: int
    height: int
    mount_height: float
    frame_interval: float
    r_rect: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name in ("f", "p_x", "p_y", "mount_height", "frame_interval"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"camera parameter {name} must be positive")
        r = np.asarray(self.r_rect, dtype=np.float64)
        if not is_rotation(r, tol=1e-9):
            raise ValueError("r_rect must be orthonormal with det +1")
        r = np.ascontiguousarray(r)
        r.setflags(write=False)
        object.__setattr__(self, "r_rect", r)

    @property
    def fx(self) -> float:
        """Focal length in horizontal pixels."""
        return self.f / self.p_x

    @property
    def fy(self) -> float:
        return self.f / self.p_y

    def intrinsic_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.c_x], [0.0, self.fy, self.c_y], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so h[2,2] == 1."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        if h.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if abs(np.linalg.det(h)) <= 1e-12:
            raise ValueError("homography is numerically singular")
        if abs(h[2, 2]) <= 1e-12:
            raise ValueError("cannot normalize: h[2,2] is zero")
        h = h / h[2, 2]
        h = np.ascontiguousarray(h)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map an (n, 2) array of pixel points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        ones = np.ones((pts.shape[0], 1))
        q = np.hstack([pts, ones]) @ self.h.T
        return q[:, :2] / q[:, 2:3]


@dataclass(frozen=True)
class PixelPoint:
    """Image point; sub-pixel coordinates allowed."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("pixel coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])


# ---------------------------------------------------------------------------
# PGM codec (binary P5, 8 or 16 bit)

_TOKEN_RE = re.compile(rb"\S+")


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Skip whitespace/comments, return (token, position after token)."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise FormatError("unterminated comment in header", offset=pos)
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise FormatError("truncated header", offset=pos)
    m = _TOKEN_RE.match(buf, pos)
    return m.group(0), m.end()


def decode_pgm(buf: bytes) -> Image:
    """Decode a binary PGM (P5) stream; samples scaled by the max value."""
    if buf[:2] != b"P5":
        raise FormatError(f"unsupported magic {buf[:2]!r}, expected P5", offset=0)
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _next_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"non-numeric header field {tok!r}", offset=pos)
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError("non-positive image dimensions", offset=pos)
    if not 0 < maxval < 65536:
        raise FormatError(f"maxval {maxval} out of range", offset=pos)
    # exactly one whitespace byte separates header and payload
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise FormatError("missing whitespace before payload", offset=pos)
    pos += 1
    nbytes = width * height * (2 if maxval > 255 else 1)
    payload = buf[pos : pos + nbytes]
    if len(payload) < nbytes:
        raise FormatError(
            f"truncated payload: need {nbytes} bytes, have {len(payload)}",
            offset=pos + len(payload),
        )
    dtype = ">u2" if maxval > 255 else np.uint8
    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    data = (raw / maxval).reshape(height, width)
    return Image(width=width, height=height, data=data)


def encode_pgm(img: Image, maxval: int = 65535) -> bytes:
    """Encode to canonical binary PGM; inverse of decode for matching maxval."""
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval {maxval} out of range")
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    raw = np.rint(img.data * maxval)
    dtype = ">u2" if maxval > 255 else np.uint8
    return header + raw.astype(dtype).tobytes()


# ---------------------------------------------------------------------------
# Rectification


def build_rectifying_homography(cam: CameraModel) -> Homography:
    """Homography mapping the physical view onto the top-view orientation.

    Rotation-only case: the plane normal and camera-to-plane distance drop
    out, leaving K @ R_rect^T @ K^-1.
    """
    k = cam.intrinsic_matrix()
    return Homography(k @ cam.r_rect.T @ np.linalg.inv(k))


def warp_to_topview(
    img: Image, h: Homography, region: tuple[int, int, int, int]
) -> tuple[Image, np.ndarray]:
    """Resample ``img`` under ``h`` over ``region`` = (x0, y0, width, height).

    Output pixel (x', y') is the bilinear sample of the source at
    H^-1 (x', y', 1). Returns (warped, validity mask); out-of-frame samples
    are zero with mask 0.
    """
    x0, y0, w, hgt = region
    if w <= 0 or hgt <= 0:
        raise EmptyWarpError(f"empty warp region {region}")
    hinv = np.ascontiguousarray(h.inverse().h)
    out, mask = kernels.warp_bilinear(
        np.ascontiguousarray(img.data), hinv, int(x0), int(y0), int(w), int(hgt)
    )
    if not mask.any():
        raise EmptyWarpError("warp region maps entirely outside the source image")
    return Image(width=w, height=hgt, data=out), mask.astype(bool)


def compensate_rotation(p: PixelPoint, cam: CameraModel, r_pred: np.ndarray) -> PixelPoint:
    """Remove a predicted inter-frame rotation from an image point.

    The point is back-projected to the metric ray (x, y, f), rotated by
    R^T and re-projected, so the residual flow is purely translational.
    """
    r_pred = np.asarray(r_pred, dtype=np.float64)
    if not is_rotation(r_pred, tol=1e-6):
        raise ValueError("r_pred must be orthonormal with det +1")
    ray = np.array(
        [(p.u - cam.c_x) * cam.p_x, (p.v - cam.c_y) * cam.p_y, cam.f]
    )
    l = r_pred.T @ ray
    if abs(l[2]) <= 1e-6 * cam.f:
        raise DegeneratePointError(
            f"point ({p.u:.2f}, {p.v:.2f}) rotated onto the principal plane"
        )
    scale = cam.f / l[2]
    return PixelPoint(
        u=cam.c_x + scale * l[0] / cam.p_x,
        v=cam.c_y + scale * l[1] / cam.p_y,
    )
