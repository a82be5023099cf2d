"""Pure-numpy reference implementations of the hot inner loops.

Always importable; selected via ``RAILODO_NUMBA=0`` or used as fallback when
numba is unavailable. Semantics must match ``_numba`` (same sampling rules,
same masking); tiny float differences from summation order are allowed.
"""

from __future__ import annotations

import numpy as np


def warp_bilinear(src, hinv, x0, y0, out_w, out_h):
    """Sample ``src`` at ``hinv @ (x', y', 1)`` for every output pixel.

    Returns (out, mask) where mask is 1 for pixels whose source sample lies
    fully inside the image. Pixel centers sit on integer coordinates.
    """
    h_img, w_img = src.shape
    xs, ys = np.meshgrid(
        np.arange(out_w, dtype=np.float64) + x0,
        np.arange(out_h, dtype=np.float64) + y0,
    )
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
        sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom
    valid = (
        np.isfinite(sx)
        & np.isfinite(sy)
        & (np.abs(denom) > 1e-12)
        & (sx >= 0.0)
        & (sx <= w_img - 1.0)
        & (sy >= 0.0)
        & (sy <= h_img - 1.0)
    )
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    ix = np.minimum(sx.astype(np.int64), w_img - 2) if w_img > 1 else np.zeros_like(sx, np.int64)
    iy = np.minimum(sy.astype(np.int64), h_img - 2) if h_img > 1 else np.zeros_like(sy, np.int64)
    fx = sx - ix
    fy = sy - iy
    i00 = src[iy, ix]
    i01 = src[iy, np.minimum(ix + 1, w_img - 1)]
    i10 = src[np.minimum(iy + 1, h_img - 1), ix]
    i11 = src[np.minimum(iy + 1, h_img - 1), np.minimum(ix + 1, w_img - 1)]
    out = (
        i00 * (1.0 - fx) * (1.0 - fy)
        + i01 * fx * (1.0 - fy)
        + i10 * (1.0 - fx) * fy
        + i11 * fx * fy
    )
    out = np.where(valid, out, 0.0)
    return out, valid.astype(np.uint8)


def render_plane(tex, world_scale, r_wc, cam_pos, fx, fy, cx, cy, width, height):
    """Back-project every pixel onto the z=0 plane and sample the texture.

    Texture indexing: column i -> world x = i * world_scale, row j -> world
    y = j * world_scale, sampled with wrap-around so it tiles seamlessly.
    Rays not hitting the plane are masked out.
    """
    th, tw = tex.shape
    us, vs = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    dx = (us - cx) / fx
    dy = (vs - cy) / fy
    # direction in world coordinates: R^T @ (dx, dy, 1)
    wx = r_wc[0, 0] * dx + r_wc[1, 0] * dy + r_wc[2, 0]
    wy = r_wc[0, 1] * dx + r_wc[1, 1] * dy + r_wc[2, 1]
    wz = r_wc[0, 2] * dx + r_wc[1, 2] * dy + r_wc[2, 2]
    valid = wz < -1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(valid, -cam_pos[2] / wz, 0.0)
    valid &= t > 0.0
    px = cam_pos[0] + t * wx
    py = cam_pos[1] + t * wy
    sx = np.mod(px / world_scale, tw)
    sy = np.mod(py / world_scale, th)
    ix = sx.astype(np.int64) % tw
    iy = sy.astype(np.int64) % th
    fxs = sx - sx.astype(np.int64)
    fys = sy - sy.astype(np.int64)
    ix1 = (ix + 1) % tw
    iy1 = (iy + 1) % th
    out = (
        tex[iy, ix] * (1.0 - fxs) * (1.0 - fys)
        + tex[iy, ix1] * fxs * (1.0 - fys)
        + tex[iy1, ix] * (1.0 - fxs) * fys
        + tex[iy1, ix1] * fxs * fys
    )
    out = np.where(valid, out, 0.0)
    return out, valid.astype(np.uint8)


def harris_score(data, k=0.04):
    """Harris corner response: structure tensor entries smoothed with the
    separable binomial [1,4,6,4,1]/16 window (edge-replicated), central
    difference gradients with one-sided edges (np.gradient convention).
    """
    from scipy import ndimage

    kern = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

    def smooth(a):
        a = ndimage.correlate1d(a, kern, axis=0, mode="nearest")
        return ndimage.correlate1d(a, kern, axis=1, mode="nearest")

    gy, gx = np.gradient(data)
    sxx = smooth(gx * gx)
    syy = smooth(gy * gy)
    sxy = smooth(gx * gy)
    det = sxx * syy - sxy * sxy
    tr = sxx + syy
    return det - k * tr * tr


def max_filter2d(data, half):
    """Greatest value in the (2*half+1) square window around each pixel,
    replicating edges."""
    from scipy import ndimage

    return ndimage.maximum_filter(data, size=2 * half + 1, mode="nearest")


def ssd_band(ref, cur, ref_mask, cur_mask, tx, ty, tw, th, bx, by, hx, hy):
    """SSD cost and valid-pixel count over a displacement band.

    Candidate (i, j) corresponds to displacement (bx - hx + j, by - hy + i).
    Pixels outside the current image, or masked out in either frame, do not
    contribute.
    """
    ch, cw = cur.shape
    cost = np.zeros((2 * hy + 1, 2 * hx + 1), dtype=np.float64)
    count = np.zeros((2 * hy + 1, 2 * hx + 1), dtype=np.int64)
    tpl = ref[ty : ty + th, tx : tx + tw]
    tpl_mask = ref_mask[ty : ty + th, tx : tx + tw].astype(bool)
    for i in range(2 * hy + 1):
        dy = by - hy + i
        for j in range(2 * hx + 1):
            dx = bx - hx + j
            x_lo, y_lo = tx + dx, ty + dy
            sx0 = max(0, -x_lo)
            sy0 = max(0, -y_lo)
            sx1 = min(tw, cw - x_lo)
            sy1 = min(th, ch - y_lo)
            if sx1 <= sx0 or sy1 <= sy0:
                continue
            a = tpl[sy0:sy1, sx0:sx1]
            b = cur[y_lo + sy0 : y_lo + sy1, x_lo + sx0 : x_lo + sx1]
            m = tpl_mask[sy0:sy1, sx0:sx1] & cur_mask[
                y_lo + sy0 : y_lo + sy1, x_lo + sx0 : x_lo + sx1
            ].astype(bool)
            d = a - b
            cost[i, j] = np.sum(d * d * m)
            count[i, j] = int(np.sum(m))
    return cost, count
