import math

import numpy as np
import pytest

from railodo.geometry import rect_rotation
from railodo.image import CameraModel
from railodo.synth import gen_ballast_texture


def nadir_camera(
    size: int = 256,
    f: float = 8e-3,
    pitch: float = 1e-5,
    mount_height: float = 8.0,
    frame_rate: float = 60.0,
) -> CameraModel:
    """Straight-down track camera used throughout the synthetic tests.

    With these defaults one rectified pixel corresponds to
    mount_height * pitch / f = 0.01 m of track.
    """
    return CameraModel(
        f=f,
        p_x=pitch,
        p_y=pitch,
        c_x=(size - 1) / 2.0,
        c_y=(size - 1) / 2.0,
        width=size,
        height=size,
        mount_height=mount_height,
        frame_interval=1.0 / frame_rate,
        r_rect=rect_rotation(math.pi / 2.0),
    )


@pytest.fixture(scope="session")
def cam256() -> CameraModel:
    return nadir_camera()


@pytest.fixture(scope="session")
def ballast():
    """One shared 1024x1024 texture; generating it is the slow part."""
    return gen_ballast_texture(7, size=1024)


@pytest.fixture(scope="session")
def ballast_small():
    return gen_ballast_texture(3, size=256)


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
