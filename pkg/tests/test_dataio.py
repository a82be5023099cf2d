import math
import os

import numpy as np
import pytest

from railodo import dataio
from railodo.dataio import (
    GROUND_TRUTH_HEADER,
    TAGS_HEADER,
    fmt,
    frame_path,
    read_csv,
    read_ground_truth,
    read_manifest,
    read_tags,
    write_csv,
    write_dataset,
    write_ground_truth,
    write_manifest,
    write_tags,
)
from railodo.errors import DataError
from railodo.geometry import rotation_angle
from railodo.image import decode_pgm
from railodo.synth import (
    GroundTruthRecord,
    Segment,
    TrajectorySpec,
    gen_tag_sightings,
    place_tags_straight_track,
)

from conftest import nadir_camera


# ---------------------------------------------------------------------------
# Cell formatting


def test_fmt_canonical_forms():
    assert fmt(True) == "1"
    assert fmt(False) == "0"
    assert fmt(np.bool_(True)) == "1"
    assert fmt(7) == "7"
    assert fmt(np.int64(-3)) == "-3"
    assert fmt("abc") == "abc"
    assert fmt(0.1) == "0.1"
    assert fmt(1.0) == "1.0"
    assert fmt(float(np.float64(1 / 3))) == repr(1 / 3)


def test_fmt_round_trips_floats():
    rng = np.random.default_rng(0)
    for x in rng.standard_normal(100) * 10.0 ** rng.integers(-8, 8, 100):
        assert float(fmt(float(x))) == x


# ---------------------------------------------------------------------------
# Generic CSV


def test_csv_round_trip(tmp_path):
    path = str(tmp_path / "x.csv")
    write_csv(path, "a,b,c", [[1, 2.5, "z"], [True, -0.125, "w"]])
    rows = read_csv(path, "a,b,c")
    assert rows == [["1", "2.5", "z"], ["1", "-0.125", "w"]]


def test_csv_lf_only(tmp_path):
    path = str(tmp_path / "x.csv")
    write_csv(path, "a", [[1], [2]])
    raw = open(path, "rb").read()
    assert b"\r" not in raw
    assert raw == b"a\n1\n2\n"


def test_csv_header_mismatch(tmp_path):
    path = str(tmp_path / "x.csv")
    write_csv(path, "a,b", [[1, 2]])
    with pytest.raises(DataError):
        read_csv(path, "a,c")


def test_csv_empty_file(tmp_path):
    path = str(tmp_path / "x.csv")
    open(path, "w").close()
    with pytest.raises(DataError):
        read_csv(path)


# ---------------------------------------------------------------------------
# Ground truth table


def test_ground_truth_round_trip(tmp_path):
    recs = [
        GroundTruthRecord(
            t=k / 60.0,
            x=0.1 * k,
            y=0.001 * k,
            heading=0.01 * k,
            v_l=6.0,
            v_s=0.0,
            dy_px=10.0 + 0.5 * k,
            dx_px=-0.25,
        )
        for k in range(5)
    ]
    path = str(tmp_path / "gt.csv")
    write_ground_truth(path, recs)
    back = read_ground_truth(path)
    assert len(back) == 5
    for a, b in zip(recs, back):
        assert (a.t, a.x, a.y, a.heading) == (b.t, b.x, b.y, b.heading)
        assert (a.v_l, a.v_s, a.dy_px, a.dx_px) == (b.v_l, b.v_s, b.dy_px, b.dx_px)


def test_ground_truth_bad_column_count(tmp_path):
    path = str(tmp_path / "gt.csv")
    with open(path, "w") as fh:
        fh.write(GROUND_TRUTH_HEADER + "\n")
        fh.write("0.0,1.0,2.0\n")
    with pytest.raises(DataError):
        read_ground_truth(path)


# ---------------------------------------------------------------------------
# Tag sightings table


def _sightings():
    tag_cam = nadir_camera(size=2000, f=8e-3, pitch=4e-6, mount_height=2.0)
    tags = place_tags_straight_track(spacing=50.0, count=2, lateral=1.0, height=2.0, side=0.8)
    poses = [(k * 0.1, k * 1.0, 0.0, 0.002 * k, 10.0) for k in range(110)]
    return gen_tag_sightings(poses, tag_cam, 2.0, tags, corner_noise_px=0.5, seed=1)


def test_tags_round_trip(tmp_path):
    sightings = _sightings()
    assert sightings
    path = str(tmp_path / "tags.csv")
    write_tags(path, sightings)
    back = read_tags(path)
    assert len(back) == len(sightings)
    for a, b in zip(sightings, back):
        assert b.t == a.t and b.tag_id == a.tag_id and b.side == a.side
        for ca, cb in zip(a.corners, b.corners):
            assert cb.u == ca.u and cb.v == ca.v
        # the pose travels as Euler angles; the rotation must survive
        assert np.allclose(b.pose_world.t, a.pose_world.t)
        assert rotation_angle(b.pose_world.r @ a.pose_world.r.T) < 1e-12


def test_tags_empty_round_trip(tmp_path):
    path = str(tmp_path / "tags.csv")
    write_tags(path, [])
    assert read_tags(path) == []


def test_tags_bad_column_count(tmp_path):
    path = str(tmp_path / "tags.csv")
    with open(path, "w") as fh:
        fh.write(TAGS_HEADER + "\n")
        fh.write("0.0,1\n")
    with pytest.raises(DataError):
        read_tags(path)


# ---------------------------------------------------------------------------
# Manifest


def test_manifest_round_trip(tmp_path):
    path = str(tmp_path / "m.txt")
    write_manifest(path, {"a": 1, "b": 2.5, "c": "text", "d": True})
    out = read_manifest(path)
    assert out == {"a": "1", "b": "2.5", "c": "text", "d": "1"}


def test_manifest_comments_and_blanks(tmp_path):
    path = str(tmp_path / "m.txt")
    with open(path, "w") as fh:
        fh.write("# a comment\n\nkey = value # trailing\n")
    assert read_manifest(path) == {"key": "value"}


def test_manifest_rejects_bare_token(tmp_path):
    path = str(tmp_path / "m.txt")
    with open(path, "w") as fh:
        fh.write("ok=1\nnot_a_pair\n")
    with pytest.raises(DataError) as err:
        read_manifest(path)
    assert ":2:" in str(err.value)


# ---------------------------------------------------------------------------
# Full dataset layout


def test_frame_path_one_indexed(tmp_path):
    assert frame_path("frames", 0).endswith(os.path.join("frames", "000001.pgm"))
    assert frame_path("frames", 41).endswith(os.path.join("frames", "000042.pgm"))


def test_write_dataset_layout(tmp_path, ballast_small):
    cam = nadir_camera()
    spec = TrajectorySpec(
        segments=(Segment(0.05, 1.0),), frame_rate=60.0, camera=cam, noise=0.01, seed=4
    )
    outdir = str(tmp_path / "ds")
    n = write_dataset(outdir, spec, ballast_small, world_scale=0.01)
    assert n == 4
    names = sorted(os.listdir(outdir))
    assert names == ["frames", "ground_truth.csv", "manifest.txt", "tags.csv"]
    frames = sorted(os.listdir(os.path.join(outdir, "frames")))
    assert frames == ["000001.pgm", "000002.pgm", "000003.pgm", "000004.pgm"]
    img = decode_pgm(open(os.path.join(outdir, "frames", "000001.pgm"), "rb").read())
    assert (img.width, img.height) == (cam.width, cam.height)
    gt = read_ground_truth(os.path.join(outdir, "ground_truth.csv"))
    assert len(gt) == 4
    man = read_manifest(os.path.join(outdir, "manifest.txt"))
    assert man["frame_count"] == "4"
    assert float(man["frame_rate_hz"]) == 60.0
    assert float(man["mount_height_m"]) == 8.0
    assert float(man["world_scale_m"]) == 0.01
    # straight-down mount reads back as a quarter-turn pitch
    assert float(man["cam_pitch_down_rad"]) == pytest.approx(math.pi / 2.0, abs=1e-12)


def test_write_dataset_deterministic(tmp_path, ballast_small):
    cam = nadir_camera()
    spec = TrajectorySpec(
        segments=(Segment(0.05, 1.0),), frame_rate=60.0, camera=cam, noise=0.01, seed=4
    )
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    write_dataset(a, spec, ballast_small, world_scale=0.01)
    write_dataset(b, spec, ballast_small, world_scale=0.01)
    for name in ["ground_truth.csv", "manifest.txt", "tags.csv", "frames/000002.pgm"]:
        assert open(os.path.join(a, name), "rb").read() == open(
            os.path.join(b, name), "rb").read()
