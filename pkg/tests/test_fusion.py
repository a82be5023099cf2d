import math

import numpy as np
import pytest

from railodo.errors import (
    IllConditionedTagError,
    InvalidMeasurementError,
    MonotonicityError,
)
from railodo.fusion import (
    NavState,
    ProcessNoise,
    TagObservation,
    Trajectory,
    apply_tag_correction,
    kf_predict,
    kf_update_velocity,
    tag_planar_pose,
)
from railodo.geometry import Pose, camera_orientation, rot_zyx
from railodo.image import PixelPoint
from railodo.mouse import VelocityEstimate

from conftest import nadir_camera


Q = ProcessNoise()


# ---------------------------------------------------------------------------
# Prediction


def test_predict_stationary():
    s0 = NavState.initial(sigma=0.1)
    s1 = kf_predict(s0, 1.0, Q)
    assert (s1.x_g, s1.y_g) == (0.0, 0.0)
    assert np.all(np.diag(s1.cov) > np.diag(s0.cov) - 1e-15)


def test_predict_forward_step():
    s0 = NavState(0.0, 0.0, 0.0, 1.2, np.eye(4) * 0.01)
    s1 = kf_predict(s0, 1.0 / 60.0, Q)
    assert s1.x_g == pytest.approx(0.02)
    assert s1.y_g == 0.0


def test_predict_mean_semigroup():
    s0 = NavState(1.0, -2.0, 0.3, 5.0, np.eye(4) * 0.01)
    one = kf_predict(s0, 0.5, Q)
    two = kf_predict(kf_predict(s0, 0.25, Q), 0.25, Q)
    assert (two.x_g, two.y_g, two.heading, two.v) == pytest.approx(
        (one.x_g, one.y_g, one.heading, one.v)
    )


def test_predict_heading_rotates_step():
    s0 = NavState(0.0, 0.0, math.pi / 2.0, 2.0, np.eye(4) * 0.01)
    s1 = kf_predict(s0, 0.5, Q)
    assert s1.x_g == pytest.approx(0.0, abs=1e-12)
    assert s1.y_g == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Velocity update


def test_update_perfect_measurement_limit():
    s0 = NavState(0.0, 0.0, 0.0, 0.0, np.eye(4))
    meas = VelocityEstimate(v_l=3.0, v_s=0.0, sigma_vz=1e-9)
    s1 = kf_update_velocity(s0, meas)
    assert s1.v == pytest.approx(3.0, abs=1e-6)


def test_update_uninformative_measurement():
    s0 = NavState(1.0, 2.0, 0.1, 4.0, np.eye(4) * 0.01)
    meas = VelocityEstimate(v_l=100.0, v_s=0.0, sigma_vz=1e9)
    s1 = kf_update_velocity(s0, meas)
    assert s1.v == pytest.approx(4.0, abs=1e-9)


def test_update_converges_within_50_steps():
    s = NavState(0.0, 0.0, 0.0, 0.0, np.eye(4))
    meas = VelocityEstimate(v_l=2.0, v_s=0.0, sigma_vz=0.1)
    for _ in range(50):
        s = kf_update_velocity(s, meas)
    assert abs(s.v - 2.0) / 2.0 < 0.01


def test_update_rejects_bad_noise():
    s = NavState.initial()
    meas = VelocityEstimate(v_l=1.0, v_s=0.0, sigma_vz=0.0)
    with pytest.raises(InvalidMeasurementError):
        kf_update_velocity(s, meas, heading_meas=0.1, heading_var=-1.0)


def test_cov_stays_psd_through_random_sequence():
    rng = np.random.default_rng(30)
    s = NavState.initial(sigma=2.0)
    for _ in range(200):
        s = kf_predict(s, 1.0 / 60.0, Q)
        meas = VelocityEstimate(
            v_l=float(rng.normal(5.0, 0.5)), v_s=0.0, sigma_vz=0.2
        )
        if rng.random() < 0.3:
            s = kf_update_velocity(
                s, meas, heading_meas=float(rng.normal(0, 0.01)), heading_var=1e-4
            )
        else:
            s = kf_update_velocity(s, meas)
        assert np.abs(s.cov - s.cov.T).max() < 1e-12
        assert np.linalg.eigvalsh(s.cov).min() >= -1e-9


def test_heading_wrap_in_innovation():
    s0 = NavState(0.0, 0.0, math.pi - 0.01, 1.0, np.eye(4) * 0.1)
    s1 = kf_update_velocity(
        s0,
        VelocityEstimate(v_l=1.0, v_s=0.0, sigma_vz=0.5),
        heading_meas=-math.pi + 0.01,
        heading_var=1e-4,
    )
    # the shortest arc is +0.02, not -2pi + 0.02
    assert abs(s1.heading) > math.pi - 0.02


# ---------------------------------------------------------------------------
# Trajectory


def test_trajectory_path_length_constant_speed():
    traj = Trajectory()
    s = NavState(0.0, 0.0, 0.0, 10.0, np.eye(4))
    dt = 1.0 / 60.0
    n = int(round(85.5 / dt))
    for k in range(n + 1):
        traj.append(k * dt, s)
    assert traj.path_length == pytest.approx(855.0, abs=1e-6)


def test_trajectory_zero_velocity():
    traj = Trajectory()
    s = NavState(0.0, 0.0, 0.0, 0.0, np.eye(4))
    for k in range(10):
        traj.append(float(k), s)
    assert traj.path_length == 0.0


def test_trajectory_rejects_out_of_order():
    traj = Trajectory()
    s = NavState.initial()
    traj.append(0.0, s)
    traj.append(1.0, s)
    with pytest.raises(MonotonicityError):
        traj.append(1.0, s)


# ---------------------------------------------------------------------------
# Tag pose


def _project_tag(pose: Pose, side: float, cam, noise=None):
    h = side / 2.0
    local = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])
    pts = pose.transform(local)
    us = cam.c_x + cam.fx * pts[:, 0] / pts[:, 2]
    vs = cam.c_y + cam.fy * pts[:, 1] / pts[:, 2]
    if noise is not None:
        us = us + noise[:, 0]
        vs = vs + noise[:, 1]
    return tuple(PixelPoint(u=float(u), v=float(v)) for u, v in zip(us, vs))


def _tag_cam():
    return nadir_camera(size=1000, f=8e-3, pitch=8e-6, mount_height=2.0)


def test_tag_frontal_distance():
    """Fronto-parallel 0.2 m tag seen 100 px wide at 1000 px focal length
    sits 2 m away."""
    cam = _tag_cam()
    pose = Pose(np.eye(3), np.array([0.0, 0.0, 2.0]))
    obs = TagObservation(
        tag_id=1, corners_img=_project_tag(pose, 0.2, cam), tag_world=Pose.identity(), side=0.2
    )
    est = tag_planar_pose(obs, cam)
    assert est.t[2] == pytest.approx(2.0, abs=1e-9)
    span = obs.corners_img[1].u - obs.corners_img[0].u
    assert span == pytest.approx(100.0, abs=1e-9)


def test_tag_pose_round_trip():
    cam = _tag_cam()
    rng = np.random.default_rng(31)
    for _ in range(20):
        pose = Pose(
            rot_zyx(*rng.uniform(-0.5, 0.5, 3)),
            np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(1.5, 4.0)]),
        )
        obs = TagObservation(
            tag_id=1,
            corners_img=_project_tag(pose, 0.3, cam),
            tag_world=Pose.identity(),
            side=0.3,
        )
        est = tag_planar_pose(obs, cam)
        assert np.allclose(est.t, pose.t, atol=1e-3)
        assert np.allclose(est.r, pose.r, atol=1e-3)


def test_tag_collinear_corners_rejected():
    cam = _tag_cam()
    corners = tuple(PixelPoint(u=100.0 + 10 * i, v=200.0) for i in range(4))
    obs = TagObservation(
        tag_id=1, corners_img=corners, tag_world=Pose.identity(), side=0.2
    )
    with pytest.raises(IllConditionedTagError):
        tag_planar_pose(obs, cam)


# ---------------------------------------------------------------------------
# Tag correction


def _world_tag_setup():
    """Camera at (10, 0) heading +x; tag 2 m ahead facing the camera."""
    r_tag = np.column_stack([[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [-1.0, 0.0, 0.0]])
    tag_world = Pose(r_tag, np.array([12.0, 0.0, 0.0]))
    r_wc = camera_orientation(0.0, 0.0)
    cam_world = Pose(r_wc.T, np.array([10.0, 0.0, 0.0]))
    # relative pose of the tag in the camera frame
    rel = cam_world.inverse().compose(tag_world)
    return tag_world, rel


def test_tag_correction_zero_innovation():
    tag_world, rel = _world_tag_setup()
    s0 = NavState(10.0, 0.0, 0.0, 5.0, np.eye(4) * 0.01)
    s1, applied = apply_tag_correction(s0, tag_world, rel, np.eye(3) * 1e-4)
    assert applied
    assert (s1.x_g, s1.y_g, s1.heading) == pytest.approx((10.0, 0.0, 0.0), abs=1e-9)


def test_tag_correction_pulls_offset_state():
    tag_world, rel = _world_tag_setup()
    s0 = NavState(15.0, 0.0, 0.0, 5.0, np.diag([25.0, 25.0, 0.1, 1.0]))
    s1, applied = apply_tag_correction(s0, tag_world, rel, np.eye(3) * 1e-8)
    assert applied
    assert s1.x_g == pytest.approx(10.0, abs=0.01)


def test_tag_correction_gates_outlier():
    tag_world, rel = _world_tag_setup()
    # true camera position is (10, 0); a state 10 sigma away must be skipped
    s0 = NavState(10.0 + 10.0, 0.0, 0.0, 5.0, np.diag([0.5, 0.5, 0.01, 1.0]))
    s1, applied = apply_tag_correction(s0, tag_world, rel, np.eye(3) * 0.01)
    assert not applied
    assert s1 is s0


def test_tag_correction_gate_false_positive_rate():
    """With correctly specified noise, well under 1% of valid sightings gate."""
    tag_world, rel0 = _world_tag_setup()
    rng = np.random.default_rng(32)
    sigma = 0.05
    gated = 0
    n = 500
    for _ in range(n):
        s0 = NavState(
            10.0 + rng.normal(0, sigma),
            rng.normal(0, sigma),
            rng.normal(0, 0.01),
            5.0,
            np.diag([sigma**2, sigma**2, 1e-4, 1.0]),
        )
        _, applied = apply_tag_correction(
            s0, tag_world, rel0, np.diag([sigma**2, sigma**2, 1e-4])
        )
        gated += 0 if applied else 1
    assert gated / n < 0.01
