"""Dataset serialization: CSV tables, key=value manifests, PGM frames.

All text output uses LF line endings, '.' decimal separators and
full-precision float repr, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

from .errors import DataError
from .geometry import Pose, euler_zyx, rot_zyx
from .image import Image, PixelPoint, encode_pgm
from .synth import (
    GroundTruthRecord,
    TagPlacement,
    TagSighting,
    TrajectorySpec,
    iter_sequence,
)

GROUND_TRUTH_HEADER = "t,x,y,heading,v_l,v_s,dy_px,dx_px"
TAGS_HEADER = (
    "t,tag_id,u1,v1,u2,v2,u3,v3,u4,v4,tag_x,tag_y,tag_z,tag_yaw,tag_pitch,tag_roll,side"
)
DISPLACEMENT_HEADER = (
    "frame_idx,keyframe_id,x_p,y_p,dx,dy,n_contrib,sigma_z_px,v_l,v_s,sigma_vz"
)
POSE_HEADER = (
    "frame_idx,n_candidates,n_filtered,epipole_u,epipole_v,"
    "yaw,pitch,roll,tx,ty,tz,p11,p12,p22"
)
TRAJECTORY_HEADER = "t,x_g,y_g,heading,v," + ",".join(
    f"c{i+1}{j+1}" for i in range(4) for j in range(i, 4)
)


def fmt(x) -> str:
    """Canonical cell text: shortest round-trip repr for floats."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(fmt(c) for c in row) + "\n")


def read_csv(path: str, expected_header: Optional[str] = None) -> list[list[str]]:
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    if expected_header is not None and lines[0] != expected_header:
        raise DataError(f"{path}: unexpected header {lines[0]!r}")
    return [line.split(",") for line in lines[1:] if line]


# ---------------------------------------------------------------------------
# Ground truth


def write_ground_truth(path: str, records: list[GroundTruthRecord]) -> None:
    write_csv(
        path,
        GROUND_TRUTH_HEADER,
        (
            (r.t, r.x, r.y, r.heading, r.v_l, r.v_s, r.dy_px, r.dx_px)
            for r in records
        ),
    )


def read_ground_truth(path: str) -> list[GroundTruthRecord]:
    out = []
    for row in read_csv(path, GROUND_TRUTH_HEADER):
        if len(row) != 8:
            raise DataError(f"{path}: expected 8 columns, got {len(row)}")
        t, x, y, h, vl, vs, dy, dx = map(float, row)
        out.append(
            GroundTruthRecord(
                t=t, x=x, y=y, heading=h, v_l=vl, v_s=vs, dy_px=dy, dx_px=dx
            )
        )
    return out


# ---------------------------------------------------------------------------
# Tag sightings


def write_tags(path: str, sightings: list[TagSighting]) -> None:
    rows = []
    for s in sightings:
        yaw, pitch, roll = euler_zyx(s.pose_world.r)
        row = [s.t, s.tag_id]
        for c in s.corners:
            row.extend([c.u, c.v])
        row.extend(list(s.pose_world.t) + [yaw, pitch, roll, s.side])
        rows.append(row)
    write_csv(path, TAGS_HEADER, rows)


def read_tags(path: str) -> list[TagSighting]:
    out = []
    for row in read_csv(path, TAGS_HEADER):
        if len(row) != 17:
            raise DataError(f"{path}: expected 17 columns, got {len(row)}")
        vals = [float(c) for c in row]
        corners = tuple(
            PixelPoint(u=vals[2 + 2 * i], v=vals[3 + 2 * i]) for i in range(4)
        )
        pose = Pose(rot_zyx(vals[13], vals[14], vals[15]), np.array(vals[10:13]))
        out.append(
            TagSighting(
                t=vals[0],
                tag_id=int(row[1]),
                corners=corners,
                pose_world=pose,
                side=vals[16],
            )
        )
    return out


# ---------------------------------------------------------------------------
# Manifest


def write_manifest(path: str, entries: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={fmt(v) if isinstance(v, (int, float, np.floating, np.integer, bool)) else v}\n")


def read_manifest(path: str) -> dict:
    out = {}
    with open(path, "r") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{i}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------------
# Full dataset


def frame_path(frames_dir: str, frame_idx: int) -> str:
    return os.path.join(frames_dir, f"{frame_idx + 1:06d}.pgm")


def _pitch_down(cam) -> float:
    """Recover the mounting pitch-down angle from the rectifying rotation."""
    import math

    from .geometry import camera_orientation

    phys = cam.r_rect @ camera_orientation(0.0, math.pi / 2.0)
    z_c = phys[2]
    return math.atan2(-z_c[2], z_c[0])


def write_dataset(
    outdir: str,
    spec: TrajectorySpec,
    texture: Image,
    world_scale: float = 0.002,
    sightings: Optional[list[TagSighting]] = None,
    extra_manifest: Optional[dict] = None,
) -> int:
    """Render the whole run to disk; returns the frame count.

    Layout: frames/000001.pgm (1-indexed, 16-bit), ground_truth.csv,
    tags.csv, manifest.txt.
    """
    frames_dir = os.path.join(outdir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    records = []
    count = 0
    for idx, (frame, _mask, rec) in enumerate(iter_sequence(spec, texture, world_scale)):
        with open(frame_path(frames_dir, idx), "wb") as fh:
            fh.write(encode_pgm(frame, maxval=65535))
        records.append(rec)
        count += 1
    write_ground_truth(os.path.join(outdir, "ground_truth.csv"), records)
    write_tags(os.path.join(outdir, "tags.csv"), sightings or [])
    cam = spec.camera
    manifest = {
        "frame_count": count,
        "frame_rate_hz": spec.frame_rate,
        "seed": spec.seed,
        "noise_sigma": spec.noise,
        "world_scale_m": world_scale,
        "focal_length_m": cam.f,
        "pixel_pitch_x_m": cam.p_x,
        "pixel_pitch_y_m": cam.p_y,
        "principal_x_px": cam.c_x,
        "principal_y_px": cam.c_y,
        "image_width_px": cam.width,
        "image_height_px": cam.height,
        "mount_height_m": cam.mount_height,
        "frame_interval_s": cam.frame_interval,
        "cam_pitch_down_rad": _pitch_down(cam),
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    write_manifest(os.path.join(outdir, "manifest.txt"), manifest)
    return count
