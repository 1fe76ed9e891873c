import numpy as np
import pytest

from uls_bench.recist import RecistMeasurement
from uls_bench.volume import BinaryMask, VoxelVolume


def disk(shape, center, radius):
    xs, ys = np.mgrid[: shape[0], : shape[1]]
    return (xs - center[0]) ** 2 + (ys - center[1]) ** 2 <= radius ** 2


def sphere(shape, center, radius_mm, spacing=(1.0, 1.0, 1.0)):
    grids = np.ogrid[tuple(slice(0, n) for n in shape)]
    d2 = sum(((g - c) * s) ** 2 for g, c, s in zip(grids, center, spacing))
    return d2 <= radius_mm ** 2


def disk_measurement(center, radius, angle=0.0, spacing=(1.0, 1.0), window=(110.0, 255.0)):
    """RECIST-style measurement of a disk: two perpendicular diameters."""
    cx, cy = center
    u = np.array([np.cos(angle), np.sin(angle)]) * radius
    v = np.array([-u[1], u[0]])
    return RecistMeasurement(
        slice_index=0,
        long_axis=((cx - u[0], cy - u[1]), (cx + u[0], cy + u[1])),
        short_axis=((cx - v[0], cy - v[1]), (cx + v[0], cy + v[1])),
        in_plane_spacing=spacing,
        window_level=window[0] if window else None,
        window_width=window[1] if window else None,
    )


def sphere_phantom(shape=(64, 64, 48), center=(32, 32, 24), radius=8.0, inside=60, outside=-20,
                   noise=0.0, seed=0, spacing=(1.0, 1.0, 1.0)):
    truth = sphere(shape, center, radius, spacing)
    data = np.where(truth, inside, outside).astype(np.float32)
    if noise:
        data = data + np.random.default_rng(seed).normal(0, noise, shape).astype(np.float32)
    return VoxelVolume(data.astype(np.float32), spacing), BinaryMask(truth, spacing)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
