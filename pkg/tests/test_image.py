import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from railodo.errors import DegeneratePointError, EmptyWarpError, FormatError
from railodo.geometry import rot_y, rot_z
from railodo.image import (
    CameraModel,
    Homography,
    Image,
    PixelPoint,
    build_rectifying_homography,
    compensate_rotation,
    decode_pgm,
    encode_pgm,
    warp_to_topview,
)

from conftest import nadir_camera


# ---------------------------------------------------------------------------
# Image type


def test_image_rejects_bad_shape():
    with pytest.raises(ValueError):
        Image(width=3, height=2, data=np.zeros((3, 3)))


def test_image_rejects_out_of_range():
    with pytest.raises(ValueError):
        Image.from_array(np.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        Image.from_array(np.full((4, 4), np.nan))


def test_image_data_immutable():
    img = Image.from_array(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0


# ---------------------------------------------------------------------------
# PGM codec


def test_decode_extremes():
    buf = b"P5\n2 1\n255\n" + bytes([0, 255])
    img = decode_pgm(buf)
    assert img.width == 2 and img.height == 1
    assert img.data[0, 0] == 0.0
    assert img.data[0, 1] == 1.0


def test_decode_16bit_scaling():
    buf = b"P5\n1 1\n65535\n" + (32768).to_bytes(2, "big")
    img = decode_pgm(buf)
    assert img.data[0, 0] == pytest.approx(32768 / 65535)


def test_decode_comments_in_header():
    buf = b"P5\n# a comment\n2 1 # trailing\n255\n" + bytes([7, 9])
    img = decode_pgm(buf)
    assert img.data[0, 0] == pytest.approx(7 / 255)


def test_encode_decode_round_trip_bytes():
    rng = np.random.default_rng(0)
    img = Image.from_array(rng.integers(0, 65536, (5, 7)) / 65535.0)
    buf = encode_pgm(img, maxval=65535)
    assert encode_pgm(decode_pgm(buf), maxval=65535) == buf


@given(
    w=st.integers(1, 12),
    h=st.integers(1, 12),
    maxval=st.sampled_from([255, 4095, 65535]),
    seed=st.integers(0, 2**31),
)
@settings(max_examples=40, deadline=None)
def test_codec_identity_property(w, h, maxval, seed):
    rng = np.random.default_rng(seed)
    raw = rng.integers(0, maxval + 1, (h, w))
    img = Image.from_array(raw / maxval)
    out = decode_pgm(encode_pgm(img, maxval=maxval))
    assert np.allclose(out.data, img.data, atol=0.5 / maxval)


def test_decode_bad_magic_offset():
    with pytest.raises(FormatError) as e:
        decode_pgm(b"P6\n1 1\n255\n\x00")
    assert e.value.offset == 0


def test_decode_truncated_payload():
    with pytest.raises(FormatError) as e:
        decode_pgm(b"P5\n4 4\n255\n\x00\x00")
    assert "truncated payload" in str(e.value)


def test_decode_non_numeric_header():
    with pytest.raises(FormatError):
        decode_pgm(b"P5\nx 1\n255\n\x00")


def test_decode_truncated_header():
    with pytest.raises(FormatError):
        decode_pgm(b"P5\n4")


def test_decode_bad_maxval():
    with pytest.raises(FormatError):
        decode_pgm(b"P5\n1 1\n70000\n\x00\x00")


# ---------------------------------------------------------------------------
# Camera model and homography


def test_camera_rejects_nonpositive():
    with pytest.raises(ValueError):
        nadir_camera(mount_height=-1.0)


def test_camera_rejects_bad_r_rect(cam256):
    with pytest.raises(ValueError):
        CameraModel(
            f=cam256.f,
            p_x=cam256.p_x,
            p_y=cam256.p_y,
            c_x=cam256.c_x,
            c_y=cam256.c_y,
            width=cam256.width,
            height=cam256.height,
            mount_height=cam256.mount_height,
            frame_interval=cam256.frame_interval,
            r_rect=np.eye(3) * 1.001,
        )


def test_homography_normalized():
    h = Homography(np.diag([2.0, 2.0, 2.0]))
    assert h.h[2, 2] == 1.0
    assert np.allclose(h.h, np.eye(3))


def test_homography_rejects_singular():
    with pytest.raises(ValueError):
        Homography(np.diag([1.0, 0.0, 1.0]))


def test_rectifying_homography_identity(cam256):
    h = build_rectifying_homography(cam256)
    assert np.allclose(h.h, np.eye(3), atol=1e-12)


def test_rectifying_homography_rz_pi():
    """In-plane half-turn about a centered principal point mirrors offsets."""
    cam = nadir_camera()
    cam = CameraModel(
        f=cam.f,
        p_x=cam.p_x,
        p_y=cam.p_y,
        c_x=cam.c_x,
        c_y=cam.c_y,
        width=cam.width,
        height=cam.height,
        mount_height=cam.mount_height,
        frame_interval=cam.frame_interval,
        r_rect=rot_z(math.pi),
    )
    h = build_rectifying_homography(cam)
    mapped = h.apply([[cam.c_x + 10.0, cam.c_y + 5.0]])[0]
    assert np.allclose(mapped, [cam.c_x - 10.0, cam.c_y - 5.0], atol=1e-9)


def test_homography_inverse(cam256):
    """Mapping points forward then through the inverse is the identity,
    regardless of the projective scale normalization."""
    rng = np.random.default_rng(3)
    h = Homography(np.eye(3) + 0.01 * rng.standard_normal((3, 3)))
    pts = rng.uniform(0.0, 256.0, (20, 2))
    back = h.inverse().apply(h.apply(pts))
    assert np.allclose(back, pts, atol=1e-9)
    prod = h.h @ h.inverse().h
    assert np.allclose(prod / prod[0, 0], np.eye(3), atol=1e-10)


# ---------------------------------------------------------------------------
# Warping


def _identity_h():
    return Homography(np.eye(3))


def test_warp_identity_full_frame(ballast_small):
    out, mask = warp_to_topview(
        ballast_small, _identity_h(), region=(0, 0, ballast_small.width, ballast_small.height)
    )
    assert np.array_equal(out.data, ballast_small.data)
    assert mask.all()


def test_warp_integer_translation(ballast_small):
    # output pixel (x', y') samples the source at (x'-3, y'-5)
    h = Homography(np.array([[1.0, 0.0, 3.0], [0.0, 1.0, 5.0], [0.0, 0.0, 1.0]]))
    out, mask = warp_to_topview(h=h, img=ballast_small, region=(0, 0, 64, 64))
    assert mask[5:, 3:].all()
    assert np.array_equal(out.data[5:, 3:], ballast_small.data[: 64 - 5, : 64 - 3])


def test_warp_empty_region(ballast_small):
    with pytest.raises(EmptyWarpError):
        warp_to_topview(ballast_small, _identity_h(), region=(0, 0, 0, 10))


def test_warp_fully_outside(ballast_small):
    with pytest.raises(EmptyWarpError):
        warp_to_topview(ballast_small, _identity_h(), region=(10000, 10000, 16, 16))


def test_warp_linearity(ballast_small):
    """Bilinear sampling is linear in intensity."""
    rng = np.random.default_rng(4)
    other = Image.from_array(rng.random(ballast_small.data.shape))
    h = Homography(np.array([[1.0, 0.02, 2.3], [-0.01, 1.0, 4.7], [0.0, 0.0, 1.0]]))
    region = (0, 0, 120, 120)
    a, b = 0.3, 0.6
    mix = Image.from_array(a * ballast_small.data + b * other.data)
    w_mix, m = warp_to_topview(mix, h, region)
    w1, _ = warp_to_topview(ballast_small, h, region)
    w2, _ = warp_to_topview(other, h, region)
    assert np.allclose(w_mix.data[m], (a * w1.data + b * w2.data)[m], atol=1e-12)


def test_warp_round_trip_psnr(ballast_small):
    """Warp then inverse-warp a smooth texture: interior PSNR above 40 dB."""
    angle = 0.15
    cam = nadir_camera()
    k = cam.intrinsic_matrix()
    h = Homography(k @ rot_z(angle) @ np.linalg.inv(k))
    fwd, _ = warp_to_topview(ballast_small, h, region=(0, 0, 256, 256))
    back, mask = warp_to_topview(fwd, h.inverse(), region=(0, 0, 256, 256))
    inner = np.zeros_like(mask)
    inner[64:192, 64:192] = True
    inner &= mask
    err = back.data[inner] - ballast_small.data[inner]
    psnr = 10.0 * math.log10(1.0 / np.mean(err**2))
    assert psnr > 40.0


def test_warp_group_property(ballast_small):
    """Two successive rotation warps match the single combined warp."""
    cam = nadir_camera()
    k = cam.intrinsic_matrix()
    kinv = np.linalg.inv(k)
    r1, r2 = rot_z(0.1), rot_z(0.07)
    region = (64, 64, 128, 128)
    step1, _ = warp_to_topview(
        ballast_small, Homography(k @ r1.T @ kinv), region=(0, 0, 256, 256)
    )
    step2, m2 = warp_to_topview(step1, Homography(k @ r2.T @ kinv), region)
    both, mb = warp_to_topview(
        ballast_small, Homography(k @ (r1 @ r2).T @ kinv), region
    )
    m = m2 & mb
    assert np.abs(step2.data[m] - both.data[m]).mean() < 1e-2


# ---------------------------------------------------------------------------
# Rotation compensation


def test_compensate_identity(cam256):
    p = PixelPoint(u=40.0, v=200.0)
    q = compensate_rotation(p, cam256, np.eye(3))
    assert (q.u, q.v) == (p.u, p.v)


def test_compensate_small_yaw_first_order(cam256):
    """Small rotation about camera Y shifts a centered point by ~f_px * delta."""
    delta = 1e-3
    p = PixelPoint(u=cam256.c_x, v=cam256.c_y)
    q = compensate_rotation(p, cam256, rot_y(delta))
    f_px = cam256.f / cam256.p_x
    assert q.u - p.u == pytest.approx(-f_px * delta, rel=1e-5)
    assert q.v == pytest.approx(p.v, abs=1e-9)


def test_compensate_inverse_composition(cam256):
    rng = np.random.default_rng(5)
    r = rot_y(0.02) @ rot_z(0.03)
    for _ in range(20):
        p = PixelPoint(u=rng.uniform(0, 255), v=rng.uniform(0, 255))
        q = compensate_rotation(compensate_rotation(p, cam256, r), cam256, r.T)
        assert math.hypot(q.u - p.u, q.v - p.v) < 1e-9


def test_compensate_degenerate_point(cam256):
    # rotate the optical axis by ~90 degrees: a centered point lands on the
    # principal plane
    with pytest.raises(DegeneratePointError):
        compensate_rotation(
            PixelPoint(u=cam256.c_x, v=cam256.c_y), cam256, rot_y(math.pi / 2)
        )
