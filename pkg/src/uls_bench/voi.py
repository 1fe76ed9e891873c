"""Click-centred volume-of-interest extraction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .volume import BinaryMask, VoxelVolume, connected_components, save_volume

VOI_SHAPE = (256, 256, 128)


class VoiError(ValueError):
    pass


@dataclass(frozen=True)
class VoiSpec:
    shape: tuple[int, int, int] = VOI_SHAPE
    pad_rule: str = "min_minus_one"
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise ValueError(f"VOI shape must be 3 positive ints, got {self.shape}")
        if self.pad_rule != "min_minus_one":
            raise ValueError(f"unsupported pad rule {self.pad_rule!r}")

    @property
    def center_index(self) -> tuple[int, int, int]:
        return voi_center(self.shape)


def voi_center(shape) -> tuple[int, int, int]:
    """Index of the 'middle' voxel: floor(shape / 2)."""
    return tuple(int(n) // 2 for n in shape)


@dataclass(frozen=True, eq=False)
class VoiSample:
    image: VoxelVolume
    label: BinaryMask
    center_source_voxel: tuple[int, int, int]
    pad_value: float
    padded: bool
    oversized: bool = False
    provenance: dict = field(default_factory=dict)

    def sidecar(self) -> dict:
        return {
            "center_source_voxel": list(self.center_source_voxel),
            "voi_center_index": list(voi_center(self.image.dims)),
            "pad_value": self.pad_value,
            "padded": self.padded,
            "excluded_oversized": self.oversized,
            **self.provenance,
        }


def sample_center(mask: BinaryMask, rng_seed: int) -> tuple[int, int, int]:
    """Draw one foreground voxel uniformly, deterministically for a given seed."""
    fg = np.argwhere(mask.data)
    if len(fg) == 0:
        raise VoiError("cannot sample a center from an empty mask")
    rng = np.random.default_rng(rng_seed)
    return tuple(int(c) for c in fg[rng.integers(len(fg))])


def strip_noncentral(label: BinaryMask, connectivity: int = 26) -> BinaryMask:
    """Keep only the component that contains the centre voxel."""
    center = voi_center(label.dims)
    if not label.data[center]:
        raise VoiError(f"label is background at the VOI center {center}")
    labels, _ = connected_components(label, connectivity)
    return BinaryMask(labels == labels[center], label.spacing)


def axial_bbox_diagonal(mask: np.ndarray) -> float:
    """Diagonal, in voxels, of the in-plane bounding box of a 3D mask."""
    xs, ys = np.nonzero(mask.any(axis=2))
    if len(xs) == 0:
        return 0.0
    return math.hypot(xs.max() - xs.min() + 1, ys.max() - ys.min() + 1)


def _pad_value(footprint: np.ndarray) -> tuple[float, np.dtype]:
    dtype = footprint.dtype
    lowest = footprint.min()
    if dtype.kind in "iu":
        pad = int(lowest) - 1
        if pad < np.iinfo(dtype).min:
            return float(pad), np.dtype(np.float32)
        return pad, dtype
    return float(lowest) - 1.0, dtype


def extract_voi(
    scan: VoxelVolume,
    lesion_mask: BinaryMask,
    center,
    spec: VoiSpec = VoiSpec(),
    provenance: dict | None = None,
) -> VoiSample:
    """Crop a fixed-shape VOI so that ``center`` lands on the VOI's middle voxel.

    Out-of-scan voxels are filled with (footprint minimum - 1). The label keeps
    only the lesion component through the centre. Lesions whose in-plane extent
    does not fit the VOI are still cropped but flagged ``oversized``.
    """
    if not lesion_mask.aligned_with(scan):
        raise VoiError("scan and lesion mask are not aligned")
    center = tuple(int(c) for c in center)
    if not all(0 <= c < n for c, n in zip(center, scan.dims)):
        raise VoiError(f"center {center} lies outside the scan {scan.dims}")
    if not lesion_mask.data[center]:
        raise VoiError(f"center {center} is not a lesion voxel")

    # source index = center - voi_center + voi index
    origin = [c - m for c, m in zip(center, spec.center_index)]
    src, dst = [], []
    for o, n, size in zip(origin, scan.dims, spec.shape):
        lo, hi = max(o, 0), min(o + size, n)
        src.append(slice(lo, hi))
        dst.append(slice(lo - o, hi - o))
    src, dst = tuple(src), tuple(dst)

    footprint = scan.data[src]
    pad, dtype = _pad_value(footprint)
    image = np.full(spec.shape, pad, dtype=dtype)
    image[dst] = footprint
    padded = footprint.shape != tuple(spec.shape)

    label = np.zeros(spec.shape, dtype=bool)
    label[dst] = lesion_mask.data[src]
    label = strip_noncentral(BinaryMask(label, scan.spacing))

    labels, _ = connected_components(lesion_mask, 26)
    lesion = labels == labels[center]
    oversized = axial_bbox_diagonal(lesion) > min(spec.shape[0], spec.shape[1])

    prov = {"rng_seed": spec.rng_seed, "voi_shape": list(spec.shape), "pad_rule": spec.pad_rule}
    prov.update(provenance or {})
    return VoiSample(
        image=VoxelVolume(image, scan.spacing, scan.intensity_unit),
        label=label,
        center_source_voxel=center,
        pad_value=pad,
        padded=padded,
        oversized=oversized,
        provenance=prov,
    )


def write_voi(sample: VoiSample, out_dir, lesion_id: str) -> dict[str, Path]:
    """Write ``<id>_img.nii.gz``, ``<id>_lbl.nii.gz`` and ``<id>_voi.json``."""
    out_dir = Path(out_dir)
    paths = {
        "image": out_dir / f"{lesion_id}_img.nii.gz",
        "label": out_dir / f"{lesion_id}_lbl.nii.gz",
        "sidecar": out_dir / f"{lesion_id}_voi.json",
    }
    save_volume(sample.image, paths["image"])
    save_volume(sample.label, paths["label"])
    paths["sidecar"].write_text(json.dumps({"lesion_id": lesion_id, **sample.sidecar()}, indent=2))
    return paths
