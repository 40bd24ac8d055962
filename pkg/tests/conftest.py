"""Shared fixtures: devices, synthetic scenes, cameras."""

import numpy as np
import pytest

from splat.camera import look_at
from splat.device import SoftDevice
from splat.scene_io import Scene, SynthSpec, synth_scene


@pytest.fixture
def device():
    return SoftDevice()


@pytest.fixture
def serial_device():
    return SoftDevice(scheduler="serial", order="shuffled", seed=5)


def make_camera(width=64, height=64, eye=(0.0, 0.0, 4.0), target=(0, 0, 0),
                fov_deg=50.0):
    return look_at(eye, target, (0, 1, 0), np.radians(fov_deg), width, height)


@pytest.fixture
def camera():
    return make_camera()


@pytest.fixture
def small_scene():
    return synth_scene(7, 300, SynthSpec(sh_degree=2))


def scene_from_arrays(positions, rotations, scales, opacities, sh,
                      sh_degree) -> Scene:
    """Hand-built activated scene for pixel-exact fixtures."""
    n = len(positions)
    return Scene(
        positions=np.asarray(positions, np.float32).reshape(n, 3),
        rotations=np.asarray(rotations, np.float32).reshape(n, 4),
        scales=np.asarray(scales, np.float32).reshape(n, 3),
        opacities=np.asarray(opacities, np.float32).reshape(n),
        sh=np.asarray(sh, np.float32).reshape(n, -1, 3),
        sh_degree=sh_degree,
        dropped=0,
    )


def isotropic_scene(centers, sigmas, colors, scale=0.05):
    """Axis-aligned isotropic splats with exact DC colors.

    colors are display-channel values in [0, 1]; the DC coefficient is set
    so 0.5 + C0 * dc reproduces them exactly before quantization.
    """
    from splat.sh import SH_C0
    n = len(centers)
    dc = (np.asarray(colors, np.float64) - 0.5) / SH_C0
    return scene_from_arrays(
        centers,
        np.tile(np.float32([1, 0, 0, 0]), (n, 1)),
        np.full((n, 3), scale, np.float32),
        sigmas,
        dc.astype(np.float32).reshape(n, 1, 3),
        sh_degree=0,
    )
