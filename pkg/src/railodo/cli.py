"""Command-line front end: simulate, odometry, evaluate, plot.

Subcommands are wired so a complete experiment is reproducible from two
key=value config files: `simulate` renders a dataset, `odometry` runs the
full estimation pipeline over it, `evaluate` scores the run against ground
truth and `plot` emits standalone SVG charts. Exit codes: 0 success,
1 configuration/usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dataio, synth
from .epipolar import (
    detect_corners,
    eight_point_pose,
    epipole_least_squares,
    filter_flow_by_epipole,
    match_candidates,
    planar_flow_covariance,
    predict_epipole,
)
from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    FormatError,
    MonotonicityError,
    RailodoError,
)
from .fusion import (
    NavState,
    ProcessNoise,
    TagObservation,
    Trajectory,
    apply_tag_correction,
    heading_variance_from_cov,
    kf_predict,
    kf_update_velocity,
    tag_planar_pose,
)
from .geometry import camera_orientation, euler_zyx, rect_rotation
from .image import (
    CameraModel,
    Image,
    build_rectifying_homography,
    decode_pgm,
    warp_to_topview,
)
from .mouse import KeyframePolicy, TemplateSpec, TrainMouse

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


# ---------------------------------------------------------------------------
# key=value config files


def parse_kv_file(path: str) -> dict:
    """Parse `key=value` lines ('#' comments); returns key -> (value, line)."""
    try:
        with open(path, "r") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    out: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        out[key] = (val, lineno)
    return out


def _conv(key: str, val: str, lineno: int, typ):
    try:
        if typ is bool:
            if val in ("0", "1"):
                return val == "1"
            raise ValueError("expected 0 or 1")
        return typ(val)
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {e}", line=lineno)


def resolve_config(raw: dict, defaults: dict, allow_segments: bool = False) -> dict:
    """Apply defaults, type-convert, and reject unknown keys with their
    line numbers. ``defaults`` maps key -> (default, type)."""
    cfg = {k: d for k, (d, _t) in defaults.items()}
    segments = {}
    for key, (val, lineno) in raw.items():
        if allow_segments and key.startswith("segment"):
            try:
                idx = int(key[len("segment") :])
            except ValueError:
                raise ConfigError(f"unknown key {key!r}", line=lineno)
            parts = val.split(":")
            if len(parts) != 3:
                raise ConfigError(
                    f"{key!r} must be duration:speed:yaw_rate", line=lineno
                )
            try:
                segments[idx] = synth.Segment(*(float(p) for p in parts))
            except ValueError as e:
                raise ConfigError(f"bad segment {key!r}: {e}", line=lineno)
            continue
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        cfg[key] = _conv(key, val, lineno, defaults[key][1])
    if allow_segments:
        cfg["segments"] = tuple(segments[i] for i in sorted(segments))
    return cfg


SIM_DEFAULTS = {
    "seed": (0, int),
    "texture_seed": (7, int),
    "texture_size": (1024, int),
    "texture_octaves": (5, int),
    "motif_period_px": (64, int),
    "world_scale_m": (0.002, float),
    "frame_rate_hz": (60.0, float),
    "noise_sigma": (0.0, float),
    "focal_length_m": (0.008, float),
    "pixel_pitch_x_m": (1e-5, float),
    "pixel_pitch_y_m": (1e-5, float),
    "principal_x_px": (-1.0, float),  # -1: image centre
    "principal_y_px": (-1.0, float),
    "image_width_px": (640, int),
    "image_height_px": (480, int),
    "mount_height_m": (2.0, float),
    "cam_pitch_down_rad": (math.pi / 2.0, float),
    "tag_count": (0, int),
    "tag_spacing_m": (100.0, float),
    "tag_first_m": (-1.0, float),  # -1: one spacing in
    "tag_lateral_m": (1.0, float),
    "tag_height_m": (2.0, float),
    "tag_side_m": (0.8, float),
    "tag_corner_noise_px": (0.0, float),
    "tag_seed": (100, int),
    "tag_range_min_m": (4.0, float),
    "tag_range_max_m": (12.0, float),
    "tag_cam_focal_m": (0.008, float),
    "tag_cam_pitch_m": (4e-6, float),
    "tag_cam_width_px": (1280, int),
    "tag_cam_height_px": (960, int),
    "tag_cam_height_m": (2.0, float),
}

RUN_DEFAULTS = {
    "rect_x0": (0, int),
    "rect_y0": (0, int),
    "rect_w": (0, int),  # 0: full frame
    "rect_h": (0, int),
    "template_x": (-1, int),  # -1: centred in the rectified region
    "template_y": (-1, int),
    "template_w": (64, int),
    "template_h": (64, int),
    "max_frames": (4, int),
    "band_half_x": (6, int),
    "band_half_y": (6, int),
    "eps_g": (0.02, float),
    "refine": (True, bool),
    "velocity_threshold_px": (math.inf, float),
    "q_pos": (0.01, float),
    "q_heading": (1e-5, float),
    "q_vel": (0.5, float),
    "initial_sigma": (1.0, float),
    "meas_sigma_floor": (0.01, float),
    "use_sfm": (True, bool),
    "use_sfm_heading": (True, bool),
    "sfm_max_corners": (80, int),
    "sfm_k_candidates": (3, int),
    "sfm_gate_px": (3.0, float),
    "sfm_unit_normals": (True, bool),
    "use_tags": (True, bool),
    "tag_sigma_xy_m": (0.05, float),
    "tag_sigma_heading_rad": (0.02, float),
}


# ---------------------------------------------------------------------------
# simulate


def _build_mouse_camera(cfg: dict) -> CameraModel:
    w, h = cfg["image_width_px"], cfg["image_height_px"]
    cx = cfg["principal_x_px"] if cfg["principal_x_px"] >= 0 else (w - 1) / 2.0
    cy = cfg["principal_y_px"] if cfg["principal_y_px"] >= 0 else (h - 1) / 2.0
    return CameraModel(
        f=cfg["focal_length_m"],
        p_x=cfg["pixel_pitch_x_m"],
        p_y=cfg["pixel_pitch_y_m"],
        c_x=cx,
        c_y=cy,
        width=w,
        height=h,
        mount_height=cfg["mount_height_m"],
        frame_interval=1.0 / cfg["frame_rate_hz"],
        r_rect=rect_rotation(cfg["cam_pitch_down_rad"]),
    )


def _tag_camera_from(entries: dict, prefix: str = "tag_cam_") -> CameraModel:
    f = float(entries[prefix + "focal_m"])
    p = float(entries[prefix + "pitch_m"])
    w = int(float(entries[prefix + "width_px"]))
    h = int(float(entries[prefix + "height_px"]))
    return CameraModel(
        f=f,
        p_x=p,
        p_y=p,
        c_x=(w - 1) / 2.0,
        c_y=(h - 1) / 2.0,
        width=w,
        height=h,
        mount_height=float(entries[prefix + "height_m"]),
        frame_interval=1.0,
    )


def cmd_simulate(args) -> int:
    cfg = resolve_config(parse_kv_file(args.config), SIM_DEFAULTS, allow_segments=True)
    if not cfg["segments"]:
        raise ConfigError("no segmentN keys: at least one trajectory segment needed")
    cam = _build_mouse_camera(cfg)
    spec = synth.TrajectorySpec(
        segments=cfg["segments"],
        frame_rate=cfg["frame_rate_hz"],
        camera=cam,
        noise=cfg["noise_sigma"],
        seed=cfg["seed"],
    )
    texture = synth.gen_ballast_texture(
        cfg["texture_seed"],
        size=cfg["texture_size"],
        octaves=cfg["texture_octaves"],
        motif_period=cfg["motif_period_px"],
    )
    sightings = []
    extra = {}
    if cfg["tag_count"] > 0:
        tag_cam = _tag_camera_from({k[4:]: v for k, v in cfg.items() if k.startswith("tag_cam_")}, "cam_")
        first = cfg["tag_first_m"] if cfg["tag_first_m"] >= 0 else None
        tags = synth.place_tags_straight_track(
            spacing=cfg["tag_spacing_m"],
            count=cfg["tag_count"],
            lateral=cfg["tag_lateral_m"],
            height=cfg["tag_height_m"],
            side=cfg["tag_side_m"],
            first_at=first,
        )
        sightings = synth.gen_tag_sightings(
            synth.integrate_trajectory(spec),
            tag_cam,
            cfg["tag_cam_height_m"],
            tags,
            corner_noise_px=cfg["tag_corner_noise_px"],
            seed=cfg["tag_seed"],
            range_min=cfg["tag_range_min_m"],
            range_max=cfg["tag_range_max_m"],
        )
        for key in (
            "tag_cam_focal_m",
            "tag_cam_pitch_m",
            "tag_cam_width_px",
            "tag_cam_height_px",
            "tag_cam_height_m",
        ):
            extra[key] = cfg[key]
        extra["tag_count"] = cfg["tag_count"]
    count = dataio.write_dataset(
        args.out,
        spec,
        texture,
        world_scale=cfg["world_scale_m"],
        sightings=sightings,
        extra_manifest=extra,
    )
    print(f"wrote {count} frames and {len(sightings)} tag sightings to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# odometry pipeline


def _camera_from_manifest(man: dict) -> CameraModel:
    try:
        return CameraModel(
            f=float(man["focal_length_m"]),
            p_x=float(man["pixel_pitch_x_m"]),
            p_y=float(man["pixel_pitch_y_m"]),
            c_x=float(man["principal_x_px"]),
            c_y=float(man["principal_y_px"]),
            width=int(float(man["image_width_px"])),
            height=int(float(man["image_height_px"])),
            mount_height=float(man["mount_height_m"]),
            frame_interval=float(man["frame_interval_s"]),
            r_rect=rect_rotation(float(man["cam_pitch_down_rad"])),
        )
    except KeyError as e:
        raise DataError(f"manifest missing camera key {e}")
    except ValueError as e:
        raise DataError(f"manifest camera values invalid: {e}")


def yaw_delta_from_relative_rotation(r_rel: np.ndarray, cam: CameraModel) -> float:
    """Heading increment implied by the frame-to-frame camera rotation."""
    b = cam.r_rect @ camera_orientation(0.0, math.pi / 2.0)
    m = b.T @ r_rel @ b
    return -math.atan2(m[1, 0], m[0, 0])


@dataclass
class _SfmRow:
    n_candidates: int = 0
    n_filtered: int = 0
    epipole: tuple = (math.nan, math.nan)
    ypr: tuple = (math.nan, math.nan, math.nan)
    t_dir: tuple = (math.nan, math.nan, math.nan)
    cov2: tuple = (math.nan, math.nan, math.nan)
    yaw_delta: Optional[float] = None
    heading_var: Optional[float] = None


def _sfm_step(
    prev: Image,
    cur: Image,
    corners_t: list,
    corners_t1: list,
    cam: CameraModel,
    vel,
    step_px: float,
    cfg,
) -> _SfmRow:
    """One sparse-flow pose step; failures leave NaN fields in the row."""
    row = _SfmRow()
    motion_top = np.array([vel.v_s, -vel.v_l, 0.0])
    nrm = np.linalg.norm(motion_top)
    if nrm <= 1e-9:
        return row
    m_phys = cam.r_rect @ (motion_top / nrm)
    r_pred = np.eye(3)
    try:
        epipole = predict_epipole(m_phys, cam)
        sets = match_candidates(
            corners_t, corners_t1, prev, cur, k=cfg["sfm_k_candidates"]
        )
        row.n_candidates = len(sets)
        flow = filter_flow_by_epipole(sets, r_pred, cam, epipole, cfg["sfm_gate_px"])
        row.n_filtered = len(flow)
        x_e = epipole_least_squares(flow)
        cov = planar_flow_covariance(
            flow, x_e, step_px, cam, unit_normals=cfg["sfm_unit_normals"]
        )
        row.epipole = (x_e.u, x_e.v)
        row.cov2 = (cov[0, 0], cov[0, 1], cov[1, 1])
        r, t_dir = eight_point_pose(flow, cam)
        row.ypr = euler_zyx(r)
        row.t_dir = tuple(t_dir)
        row.yaw_delta = yaw_delta_from_relative_rotation(r, cam)
        step_m = step_px * cam.p_x / cam.f * cam.mount_height
        row.heading_var = heading_variance_from_cov(cov, max(step_m, 1e-3))
    except (RailodoError, np.linalg.LinAlgError, ValueError):
        pass
    return row


def run_pipeline(data_dir: str, cfg: dict, out_dir: str) -> Trajectory:
    man = dataio.read_manifest(os.path.join(data_dir, "manifest.txt"))
    cam = _camera_from_manifest(man)
    try:
        n_frames = int(man["frame_count"])
        frame_rate = float(man["frame_rate_hz"])
    except KeyError as e:
        raise DataError(f"manifest missing key {e}")
    dt = 1.0 / frame_rate
    if abs(cam.frame_interval - dt) > 1e-9 * dt:
        raise DataError("manifest frame_interval_s inconsistent with frame_rate_hz")
    frames_dir = os.path.join(data_dir, "frames")
    if not os.path.isdir(frames_dir):
        raise DataError(f"missing frames directory {frames_dir}")

    rx0, ry0 = cfg["rect_x0"], cfg["rect_y0"]
    rw = cfg["rect_w"] or cam.width
    rh = cfg["rect_h"] or cam.height
    tw, th = cfg["template_w"], cfg["template_h"]
    tx = cfg["template_x"] if cfg["template_x"] >= 0 else (rw - tw) // 2
    ty = cfg["template_y"] if cfg["template_y"] >= 0 else (rh - th) // 2
    template = TemplateSpec(x=tx, y=ty, width=tw, height=th)
    policy = KeyframePolicy(
        max_frames=cfg["max_frames"],
        velocity_threshold_px=cfg["velocity_threshold_px"],
        band_half_x=cfg["band_half_x"],
        band_half_y=cfg["band_half_y"],
        eps_g=cfg["eps_g"],
        refine=cfg["refine"],
    )
    mouse = TrainMouse(cam, template, policy)
    homog = build_rectifying_homography(cam)
    q = ProcessNoise(q_pos=cfg["q_pos"], q_heading=cfg["q_heading"], q_vel=cfg["q_vel"])

    sightings_by_t: dict = {}
    tag_cam = None
    tags_path = os.path.join(data_dir, "tags.csv")
    if cfg["use_tags"] and os.path.exists(tags_path):
        sightings = dataio.read_tags(tags_path)
        if sightings:
            tag_cam = _tag_camera_from(man)
            for s in sightings:
                sightings_by_t.setdefault(round(s.t, 9), []).append(s)
    r_tag = np.diag(
        [
            cfg["tag_sigma_xy_m"] ** 2,
            cfg["tag_sigma_xy_m"] ** 2,
            cfg["tag_sigma_heading_rad"] ** 2,
        ]
    )

    state = NavState.initial(sigma=cfg["initial_sigma"])
    traj = Trajectory()
    disp_rows = []
    pose_rows = []
    for idx in range(n_frames):
        path = dataio.frame_path(frames_dir, idx)
        try:
            with open(path, "rb") as fh:
                raw = decode_pgm(fh.read())
        except OSError as e:
            raise DataError(f"cannot read frame {path}: {e}")
        if raw.width != cam.width or raw.height != cam.height:
            raise DataError(
                f"{path}: frame size {raw.width}x{raw.height} does not match manifest"
            )
        rect, mask = warp_to_topview(raw, homog, region=(rx0, ry0, rw, rh))
        rec = mouse.process(rect, mask)
        disp_rows.append(
            (
                idx,
                rec.keyframe_id,
                rec.meas.x_p,
                rec.meas.y_p,
                rec.meas.dx,
                rec.meas.dy,
                rec.meas.n_contrib,
                rec.meas.sigma_z_px,
                rec.velocity.v_l,
                rec.velocity.v_s,
                rec.velocity.sigma_vz,
            )
        )
        t = idx * dt
        corners = (
            detect_corners(raw, max_count=cfg["sfm_max_corners"])
            if cfg["use_sfm"]
            else []
        )
        if idx == 0:
            traj.append(t, state)
            prev_raw = raw
            prev_corners = corners
            continue
        sfm = _SfmRow()
        if cfg["use_sfm"]:
            step_px = math.hypot(rec.delta_x, rec.delta_y)
            sfm = _sfm_step(
                prev_raw, raw, prev_corners, corners, cam, rec.velocity, step_px, cfg
            )
        pose_rows.append(
            (idx, sfm.n_candidates, sfm.n_filtered)
            + sfm.epipole
            + sfm.ypr
            + sfm.t_dir
            + sfm.cov2
        )
        state = kf_predict(state, dt, q)
        vel = rec.velocity
        sigma = max(vel.sigma_vz, cfg["meas_sigma_floor"])
        vel = type(vel)(v_l=vel.v_l, v_s=vel.v_s, sigma_vz=sigma)
        if cfg["use_sfm_heading"] and sfm.yaw_delta is not None:
            state = kf_update_velocity(
                state,
                vel,
                heading_meas=state.heading + sfm.yaw_delta,
                heading_var=max(sfm.heading_var, 1e-8),
            )
        else:
            state = kf_update_velocity(state, vel)
        for s in sightings_by_t.get(round(t, 9), []):
            obs = TagObservation(
                tag_id=s.tag_id,
                corners_img=s.corners,
                tag_world=s.pose_world,
                side=s.side,
            )
            try:
                rel = tag_planar_pose(obs, tag_cam)
            except RailodoError:
                continue
            state, _applied = apply_tag_correction(state, s.pose_world, rel, r_tag)
        traj.append(t, state)
        prev_raw = raw
        prev_corners = corners

    os.makedirs(out_dir, exist_ok=True)
    dataio.write_csv(
        os.path.join(out_dir, "displacement.csv"), dataio.DISPLACEMENT_HEADER, disp_rows
    )
    dataio.write_csv(os.path.join(out_dir, "pose.csv"), dataio.POSE_HEADER, pose_rows)
    traj_rows = []
    for t, s in zip(traj.times, traj.states):
        cells = [t, s.x_g, s.y_g, s.heading, s.v]
        for i in range(4):
            for j in range(i, 4):
                cells.append(s.cov[i, j])
        traj_rows.append(cells)
    dataio.write_csv(
        os.path.join(out_dir, "trajectory.csv"), dataio.TRAJECTORY_HEADER, traj_rows
    )
    # echo the resolved configuration and source manifest for reproducibility
    dataio.write_manifest(
        os.path.join(out_dir, "run_config.txt"),
        {k: cfg[k] for k in sorted(cfg) if k != "segments"},
    )
    dataio.write_manifest(os.path.join(out_dir, "run_manifest.txt"), man)
    return traj


def cmd_odometry(args) -> int:
    raw = parse_kv_file(args.config) if args.config else {}
    cfg = resolve_config(raw, RUN_DEFAULTS)
    traj = run_pipeline(args.data, cfg, args.out)
    print(f"processed {len(traj.times)} frames; path length {traj.path_length:.3f} m")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _path_length(xs: np.ndarray, ys: np.ndarray) -> float:
    return float(np.sum(np.hypot(np.diff(xs), np.diff(ys))))


def evaluate_run(run_dir: str, data_dir: str) -> dict:
    traj = dataio.read_csv(
        os.path.join(run_dir, "trajectory.csv"), dataio.TRAJECTORY_HEADER
    )
    gt = dataio.read_ground_truth(os.path.join(data_dir, "ground_truth.csv"))
    if len(traj) != len(gt):
        raise AlignmentError(
            f"trajectory has {len(traj)} rows, ground truth {len(gt)}"
        )
    est = np.array([[float(c) for c in row[:5]] for row in traj])
    for row_t, rec in zip(est[:, 0], gt):
        if row_t != rec.t:
            raise AlignmentError(f"timestamp mismatch: {row_t} vs {rec.t}")
    gx = np.array([r.x for r in gt])
    gy = np.array([r.y for r in gt])
    gv = np.array([r.v_l for r in gt])
    dist_true = _path_length(gx, gy)
    dist_est = _path_length(est[:, 1], est[:, 2])
    pos_err = np.hypot(est[:, 1] - gx, est[:, 2] - gy)
    vel_err = est[1:, 4] - gv[1:]
    disp = dataio.read_csv(
        os.path.join(run_dir, "displacement.csv"), dataio.DISPLACEMENT_HEADER
    )
    keyframes = len({row[1] for row in disp})
    metrics = {
        "frames": len(gt),
        "distance_true_m": dist_true,
        "distance_est_m": dist_est,
        "distance_error_m": dist_est - dist_true,
        "distance_error_pct": (
            100.0 * (dist_est - dist_true) / dist_true if dist_true > 0 else math.nan
        ),
        "velocity_rmse_mps": float(np.sqrt(np.mean(vel_err**2))) if len(vel_err) else math.nan,
        "final_position_error_m": float(pos_err[-1]),
        "max_position_error_m": float(pos_err.max()),
        "keyframe_count": keyframes,
    }
    return metrics


def cmd_evaluate(args) -> int:
    metrics = evaluate_run(args.run, args.data)
    os.makedirs(args.out, exist_ok=True)
    dataio.write_csv(
        os.path.join(args.out, "evaluation.csv"),
        "metric,value",
        ((k, v) for k, v in metrics.items()),
    )
    for k, v in metrics.items():
        print(f"{k}={dataio.fmt(v)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def render_svg(series: dict, xlabel: str, ylabel: str, title: str) -> str:
    """Minimal deterministic line chart: fixed canvas, fixed palette,
    polyline per series (a single point degrades to a circle marker)."""
    w, h, ml, mr, mt, mb = 800, 500, 70, 20, 40, 50
    xs_all = np.concatenate([np.asarray(s[0], dtype=float) for s in series.values()])
    ys_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series.values()])
    good = np.isfinite(xs_all) & np.isfinite(ys_all)
    if not np.any(good):
        raise DataError("nothing finite to plot")
    x0, x1 = float(xs_all[good].min()), float(xs_all[good].max())
    y0, y1 = float(ys_all[good].min()), float(ys_all[good].max())
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    px = lambda x: ml + (x - x0) / (x1 - x0) * (w - ml - mr)
    py = lambda y: h - mb - (y - y0) / (y1 - y0) * (h - mt - mb)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<line x1="{ml}" y1="{h-mb}" x2="{w-mr}" y2="{h-mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{h-mb}" stroke="black"/>',
        f'<text x="{(ml+w-mr)//2}" y="{h-12}" text-anchor="middle" '
        f'font-size="14">{xlabel}</text>',
        f'<text x="16" y="{(mt+h-mb)//2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 16 {(mt+h-mb)//2})">{ylabel}</text>',
        f'<text x="{w//2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{ml}" y="{h-mb+16}" font-size="11">{x0:.3g}</text>',
        f'<text x="{w-mr}" y="{h-mb+16}" text-anchor="end" font-size="11">{x1:.3g}</text>',
        f'<text x="{ml-4}" y="{h-mb}" text-anchor="end" font-size="11">{y0:.3g}</text>',
        f'<text x="{ml-4}" y="{mt+4}" text-anchor="end" font-size="11">{y1:.3g}</text>',
    ]
    for i, (name, (sx, sy)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        sx = np.asarray(sx, dtype=float)
        sy = np.asarray(sy, dtype=float)
        ok = np.isfinite(sx) & np.isfinite(sy)
        sx, sy = sx[ok], sy[ok]
        if len(sx) == 1:
            parts.append(
                f'<circle cx="{px(sx[0]):.2f}" cy="{py(sy[0]):.2f}" r="4" '
                f'fill="{color}"/>'
            )
        elif len(sx) > 1:
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(sx, sy))
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        parts.append(
            f'<text x="{w-mr-150}" y="{mt+18+16*i}" font-size="12" '
            f'fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(args) -> int:
    traj = dataio.read_csv(
        os.path.join(args.run, "trajectory.csv"), dataio.TRAJECTORY_HEADER
    )
    est = np.array([[float(c) for c in row[:5]] for row in traj])
    gt = None
    if args.data:
        gt = dataio.read_ground_truth(os.path.join(args.data, "ground_truth.csv"))
    if args.kind == "velocity":
        series = {"estimated": (est[:, 0], est[:, 4])}
        if gt:
            series["ground truth"] = ([r.t for r in gt], [r.v_l for r in gt])
        svg = render_svg(series, "time [s]", "speed [m/s]", "longitudinal velocity")
    elif args.kind == "trajectory":
        series = {"estimated": (est[:, 1], est[:, 2])}
        if gt:
            series["ground truth"] = ([r.x for r in gt], [r.y for r in gt])
        svg = render_svg(series, "x [m]", "y [m]", "planar trajectory")
    elif args.kind == "drift":
        if not gt:
            raise ConfigError("drift plot needs --data for ground truth")
        if len(gt) != len(est):
            raise AlignmentError("trajectory and ground truth lengths differ")
        err = np.hypot(
            est[:, 1] - np.array([r.x for r in gt]),
            est[:, 2] - np.array([r.y for r in gt]),
        )
        svg = render_svg(
            {"position error": (est[:, 0], err)},
            "time [s]",
            "error [m]",
            "position drift",
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown plot kind {args.kind}")
    with open(args.out, "w", newline="\n") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="railodo", description="deterministic monocular rail odometry")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a synthetic dataset")
    s.add_argument("--config", required=True, help="key=value simulation config")
    s.add_argument("--out", required=True, help="output dataset directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("odometry", help="run the estimation pipeline")
    s.add_argument("--data", required=True, help="dataset directory")
    s.add_argument("--config", default=None, help="key=value run config")
    s.add_argument("--out", required=True, help="output run directory")
    s.set_defaults(func=cmd_odometry)

    s = sub.add_parser("evaluate", help="score a run against ground truth")
    s.add_argument("--run", required=True, help="odometry output directory")
    s.add_argument("--data", required=True, help="dataset directory")
    s.add_argument("--out", required=True, help="evaluation output directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plot", help="emit an SVG chart from a run")
    s.add_argument("--run", required=True, help="odometry output directory")
    s.add_argument("--data", default=None, help="dataset directory (adds truth)")
    s.add_argument(
        "--kind", required=True, choices=("velocity", "trajectory", "drift")
    )
    s.add_argument("--out", required=True, help="output .svg path")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, AlignmentError, MonotonicityError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (RailodoError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
