"""Numba-compiled twins of the kernels in ``_numpy``.

No fastmath: reductions keep a fixed order so results are reproducible
run-to-run (the whole pipeline must be bitwise deterministic).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_OPTS = {"cache": True, "nogil": True}


@njit(**_OPTS)
def warp_bilinear(src, hinv, x0, y0, out_w, out_h):
    h_img, w_img = src.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    mask = np.zeros((out_h, out_w), dtype=np.uint8)
    for r in range(out_h):
        yo = float(y0 + r)
        for c in range(out_w):
            xo = float(x0 + c)
            denom = hinv[2, 0] * xo + hinv[2, 1] * yo + hinv[2, 2]
            if abs(denom) <= 1e-12:
                continue
            sx = (hinv[0, 0] * xo + hinv[0, 1] * yo + hinv[0, 2]) / denom
            sy = (hinv[1, 0] * xo + hinv[1, 1] * yo + hinv[1, 2]) / denom
            if not (0.0 <= sx <= w_img - 1.0 and 0.0 <= sy <= h_img - 1.0):
                continue
            ix = int(sx)
            iy = int(sy)
            if ix > w_img - 2:
                ix = w_img - 2
            if iy > h_img - 2:
                iy = h_img - 2
            if ix < 0:
                ix = 0
            if iy < 0:
                iy = 0
            fx = sx - ix
            fy = sy - iy
            ix1 = min(ix + 1, w_img - 1)
            iy1 = min(iy + 1, h_img - 1)
            val = (
                src[iy, ix] * (1.0 - fx) * (1.0 - fy)
                + src[iy, ix1] * fx * (1.0 - fy)
                + src[iy1, ix] * (1.0 - fx) * fy
                + src[iy1, ix1] * fx * fy
            )
            out[r, c] = val
            mask[r, c] = 1
    return out, mask


@njit(**_OPTS)
def render_plane(tex, world_scale, r_wc, cam_pos, fx, fy, cx, cy, width, height):
    th, tw = tex.shape
    out = np.zeros((height, width), dtype=np.float64)
    mask = np.zeros((height, width), dtype=np.uint8)
    for v in range(height):
        dy = (v - cy) / fy
        for u in range(width):
            dx = (u - cx) / fx
            wx = r_wc[0, 0] * dx + r_wc[1, 0] * dy + r_wc[2, 0]
            wy = r_wc[0, 1] * dx + r_wc[1, 1] * dy + r_wc[2, 1]
            wz = r_wc[0, 2] * dx + r_wc[1, 2] * dy + r_wc[2, 2]
            if wz >= -1e-12:
                continue
            t = -cam_pos[2] / wz
            if t <= 0.0:
                continue
            px = cam_pos[0] + t * wx
            py = cam_pos[1] + t * wy
            sx = (px / world_scale) % tw
            sy = (py / world_scale) % th
            ix = int(sx) % tw
            iy = int(sy) % th
            fxs = sx - int(sx)
            fys = sy - int(sy)
            ix1 = (ix + 1) % tw
            iy1 = (iy + 1) % th
            out[v, u] = (
                tex[iy, ix] * (1.0 - fxs) * (1.0 - fys)
                + tex[iy, ix1] * fxs * (1.0 - fys)
                + tex[iy1, ix] * (1.0 - fxs) * fys
                + tex[iy1, ix1] * fxs * fys
            )
            mask[v, u] = 1
    return out, mask


@njit(**_OPTS)
def ssd_band(ref, cur, ref_mask, cur_mask, tx, ty, tw, th, bx, by, hx, hy):
    ch, cw = cur.shape
    cost = np.zeros((2 * hy + 1, 2 * hx + 1), dtype=np.float64)
    count = np.zeros((2 * hy + 1, 2 * hx + 1), dtype=np.int64)
    for i in range(2 * hy + 1):
        dy = by - hy + i
        for j in range(2 * hx + 1):
            dx = bx - hx + j
            acc = 0.0
            n = 0
            for r in range(th):
                yc = ty + dy + r
                if yc < 0 or yc >= ch:
                    continue
                for c in range(tw):
                    xc = tx + dx + c
                    if xc < 0 or xc >= cw:
                        continue
                    if ref_mask[ty + r, tx + c] == 0 or cur_mask[yc, xc] == 0:
                        continue
                    d = ref[ty + r, tx + c] - cur[yc, xc]
                    acc += d * d
                    n += 1
            cost[i, j] = acc
            count[i, j] = n
    return cost, count


@njit(**_OPTS)
def _smooth_binomial(a):
    # separable [1,4,6,4,1]/16 with replicated edges, rows then columns
    h, w = a.shape
    k0, k1, k2 = 1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0
    tmp = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        im2 = i - 2 if i >= 2 else 0
        im1 = i - 1 if i >= 1 else 0
        ip1 = i + 1 if i + 1 < h else h - 1
        ip2 = i + 2 if i + 2 < h else h - 1
        for j in range(w):
            tmp[i, j] = (
                k0 * a[im2, j] + k1 * a[im1, j] + k2 * a[i, j]
                + k1 * a[ip1, j] + k0 * a[ip2, j]
            )
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            jm2 = j - 2 if j >= 2 else 0
            jm1 = j - 1 if j >= 1 else 0
            jp1 = j + 1 if j + 1 < w else w - 1
            jp2 = j + 2 if j + 2 < w else w - 1
            out[i, j] = (
                k0 * tmp[i, jm2] + k1 * tmp[i, jm1] + k2 * tmp[i, j]
                + k1 * tmp[i, jp1] + k0 * tmp[i, jp2]
            )
    return out


@njit(**_OPTS)
def harris_score(data, k=0.04):
    h, w = data.shape
    gx = np.empty((h, w), dtype=np.float64)
    gy = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            if 0 < j < w - 1:
                gx[i, j] = (data[i, j + 1] - data[i, j - 1]) * 0.5
            elif j == 0:
                gx[i, j] = data[i, 1] - data[i, 0] if w > 1 else 0.0
            else:
                gx[i, j] = data[i, w - 1] - data[i, w - 2]
            if 0 < i < h - 1:
                gy[i, j] = (data[i + 1, j] - data[i - 1, j]) * 0.5
            elif i == 0:
                gy[i, j] = data[1, j] - data[0, j] if h > 1 else 0.0
            else:
                gy[i, j] = data[h - 1, j] - data[h - 2, j]
    sxx = _smooth_binomial(gx * gx)
    syy = _smooth_binomial(gy * gy)
    sxy = _smooth_binomial(gx * gy)
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            det = sxx[i, j] * syy[i, j] - sxy[i, j] * sxy[i, j]
            tr = sxx[i, j] + syy[i, j]
            out[i, j] = det - k * tr * tr
    return out


@njit(**_OPTS)
def max_filter2d(data, half):
    h, w = data.shape
    tmp = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            lo = i - half if i - half > 0 else 0
            hi = i + half if i + half < h - 1 else h - 1
            m = data[lo, j]
            for r in range(lo + 1, hi + 1):
                if data[r, j] > m:
                    m = data[r, j]
            tmp[i, j] = m
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            lo = j - half if j - half > 0 else 0
            hi = j + half if j + half < w - 1 else w - 1
            m = tmp[i, lo]
            for c in range(lo + 1, hi + 1):
                if tmp[i, c] > m:
                    m = tmp[i, c]
            out[i, j] = m
    return out
