"""Voxel grids, NIfTI-1 I/O, connected components, morphology and CT intensity scaling.

Arrays are indexed ``[x, y, z]`` (nibabel convention), so ``data.shape == dims``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import nibabel as nib
import numpy as np
from scipy import ndimage

SUPPORTED_DTYPES = (np.dtype(np.int16), np.dtype(np.uint8), np.dtype(np.float32))


class VolumeLoadError(ValueError):
    """Raised when a file cannot be read as a 3D scalar NIfTI-1 volume."""


class IntensityUnit(str, enum.Enum):
    HU = "HU"
    NORMALIZED = "normalized"


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3:
        raise ValueError(f"spacing must have 3 components, got {spacing}")
    if not all(math.isfinite(s) and s > 0 for s in spacing):
        raise ValueError(f"spacing must be strictly positive and finite, got {spacing}")
    return spacing


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    """Scalar 3D grid with per-axis spacing in mm. The array is read-only."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    intensity_unit: IntensityUnit = IntensityUnit.HU

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume data must be a non-empty 3D array, got shape {data.shape}")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "intensity_unit", IntensityUnit(self.intensity_unit))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    def __eq__(self, other):
        if not isinstance(other, VoxelVolume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.intensity_unit == other.intensity_unit
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean 3D grid; foreground marks the lesion."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"mask data must be a non-empty 3D array, got shape {data.shape}")
        object.__setattr__(self, "data", _freeze(data != 0))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    def aligned_with(self, volume: VoxelVolume | BinaryMask) -> bool:
        return self.dims == volume.dims and np.allclose(self.spacing, volume.spacing)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class CtNormalization:
    """Dataset intensity statistics used for clip + z-score normalization (HU)."""

    clip_min: float = -2048.0
    clip_max: float = 3071.0
    median: float = 51.0
    mean: float = 21.7
    std: float = 331.6
    percentile_005: float = -910.0
    percentile_995: float = 1672.0

    def __post_init__(self):
        if not self.clip_min < self.clip_max:
            raise ValueError("clip_min must be below clip_max")
        if not self.std > 0:
            raise ValueError("std must be positive")


# Intensity properties of the baseline's pretraining data.
DEFAULT_CT_NORMALIZATION = CtNormalization()


def _as_array(mask) -> np.ndarray:
    if isinstance(mask, (BinaryMask, VoxelVolume)):
        return mask.data
    return np.asarray(mask)


# ---------------------------------------------------------------------------
# File I/O


def load_volume(path) -> VoxelVolume:
    """Read a 3D scalar NIfTI-1 file (``.nii`` or ``.nii.gz``)."""
    path = Path(path)
    try:
        img = nib.load(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # nibabel raises a zoo of exception types on bad headers
        raise VolumeLoadError(f"{path}: malformed NIfTI header ({exc})") from exc
    if not isinstance(img, nib.Nifti1Image) or isinstance(img, nib.Nifti2Image):
        raise VolumeLoadError(f"{path}: not a NIfTI-1 image")
    hdr = img.header
    ndim = int(hdr["dim"][0])
    if ndim != 3:
        raise VolumeLoadError(f"{path}: unsupported dimensionality (dim[0]={ndim}, expected 3)")
    dtype = hdr.get_data_dtype()
    if dtype.newbyteorder("=") not in SUPPORTED_DTYPES:
        raise VolumeLoadError(f"{path}: unsupported datatype {dtype}")
    try:
        data = np.asanyarray(img.dataobj)
    except Exception as exc:
        raise VolumeLoadError(f"{path}: could not read voxel data ({exc})") from exc
    data = data.astype(data.dtype.newbyteorder("="), copy=False)
    # header zooms are float32; take the shortest decimal that maps to the same float32
    spacing = tuple(float(str(np.float32(z))) for z in hdr.get_zooms()[:3])
    return VoxelVolume(data, spacing)


def load_mask(path) -> BinaryMask:
    """Read a label file; any nonzero voxel counts as foreground."""
    vol = load_volume(path)
    return BinaryMask(vol.data != 0, vol.spacing)


def save_volume(volume: VoxelVolume | BinaryMask, path, endianness: str = "<") -> None:
    """Write a NIfTI-1 file; gzip-compressed when the name ends in ``.gz``.

    Masks are stored as uint8 {0, 1}. Float data that is not float32 is narrowed
    to float32; other unsupported integer types raise ``TypeError``.
    """
    if isinstance(volume, BinaryMask):
        data = volume.data.astype(np.uint8)
    else:
        data = volume.data
        if data.dtype.kind == "f" and data.dtype != np.float32:
            data = data.astype(np.float32)
        elif data.dtype.kind == "b":
            data = data.astype(np.uint8)
        if data.dtype not in SUPPORTED_DTYPES:
            raise TypeError(f"cannot store dtype {data.dtype}; use int16, uint8 or float32")
    hdr = nib.Nifti1Header(endianness=endianness)
    hdr.set_data_dtype(data.dtype)
    affine = np.diag([*volume.spacing, 1.0])
    img = nib.Nifti1Image(np.asarray(data), affine, header=hdr)
    img.header.set_zooms(volume.spacing)
    nib.save(img, str(path))


# ---------------------------------------------------------------------------
# Connectivity and morphology

_CONNECTIVITY_RANK = {(2, 4): 1, (2, 8): 2, (3, 6): 1, (3, 26): 3}


def structuring_element(ndim: int, connectivity: int) -> np.ndarray:
    """Unit neighbourhood for the given connectivity (4/8 in 2D, 6/26 in 3D)."""
    try:
        rank = _CONNECTIVITY_RANK[(ndim, connectivity)]
    except KeyError:
        raise ValueError(f"connectivity {connectivity} is not valid for {ndim}D grids") from None
    return ndimage.generate_binary_structure(ndim, rank)


def connected_components(mask, connectivity: int = 26) -> tuple[np.ndarray, int]:
    """Label foreground components 1..k (0 = background).

    Labels follow raster order of each component's first voxel.
    """
    arr = _as_array(mask).astype(bool)
    labels, k = ndimage.label(arr, structure=structuring_element(arr.ndim, connectivity))
    return labels, int(k)


def largest_component(mask, connectivity: int) -> np.ndarray:
    """Boolean array of the largest component; ties go to the lowest label."""
    labels, k = connected_components(mask, connectivity)
    if k == 0:
        return np.zeros(labels.shape, dtype=bool)
    sizes = np.bincount(labels.ravel(), minlength=k + 1)[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def morph(mask, op: str, radius_px: int, connectivity: int | None = None) -> np.ndarray:
    """Binary dilation or erosion by a ball of ``radius_px`` steps.

    The ball is the ``radius_px``-fold Minkowski sum of the unit neighbourhood
    (diamond for 4/6-connectivity, square/cube for 8/26), so dilations compose
    additively. Voxels outside the grid count as foreground during erosion, which
    keeps closing extensive at the border.
    """
    arr = _as_array(mask).astype(bool)
    if radius_px < 1:
        raise ValueError("radius_px must be >= 1")
    if connectivity is None:
        connectivity = 4 if arr.ndim == 2 else 6
    se = structuring_element(arr.ndim, connectivity)
    if op == "dilate":
        return ndimage.binary_dilation(arr, structure=se, iterations=radius_px)
    if op == "erode":
        return ndimage.binary_erosion(arr, structure=se, iterations=radius_px, border_value=1)
    raise ValueError(f"unknown morphological op {op!r}")


def closing(mask, radius_px: int, connectivity: int | None = None) -> np.ndarray:
    return morph(morph(mask, "dilate", radius_px, connectivity), "erode", radius_px, connectivity)


# ---------------------------------------------------------------------------
# Intensity normalization


def normalize_window(image, window_level: float, window_width: float) -> np.ndarray:
    """Clip to ``[WL - WW/2, WL + WW/2]`` and map affinely onto ``[0, 255]``."""
    if not window_width > 0:
        raise ValueError(f"window width must be positive, got {window_width}")
    lo = window_level - window_width / 2.0
    arr = np.asarray(_as_array(image), dtype=np.float64)
    return np.clip((arr - lo) / window_width, 0.0, 1.0) * 255.0


def normalize_ct(volume: VoxelVolume, norm: CtNormalization = DEFAULT_CT_NORMALIZATION) -> VoxelVolume:
    if volume.intensity_unit != IntensityUnit.HU:
        raise ValueError("normalize_ct expects a volume in HU")
    clipped = np.clip(volume.data.astype(np.float64), norm.percentile_005, norm.percentile_995)
    out = ((clipped - norm.mean) / norm.std).astype(np.float32)
    return VoxelVolume(out, volume.spacing, IntensityUnit.NORMALIZED)
