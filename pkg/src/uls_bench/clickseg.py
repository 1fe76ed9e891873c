"""Classical click-driven 3D segmenter used as the default predictor.

Seeded region growing inside an intensity band around the click, capped at a
physical radius. Not a clinical model; defaults only aim at clean phantoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .voi import voi_center
from .volume import BinaryMask, VoxelVolume, closing, connected_components


class ClickSegError(ValueError):
    pass


@dataclass(frozen=True)
class ClickSegParams:
    tolerance_hu: float = 60.0
    max_radius_mm: float = 60.0
    smoothing: int = 1  # closing radius, px

    def __post_init__(self):
        if not (self.tolerance_hu > 0 and self.max_radius_mm > 0 and self.smoothing > 0):
            raise ValueError("click-seg parameters must be positive")


def _component_at(mask: np.ndarray, point) -> np.ndarray:
    labels, _ = connected_components(mask, 26)
    return labels == labels[point]


def segment_click(
    voi: VoxelVolume,
    center=None,
    params: ClickSegParams = ClickSegParams(),
    pad_value: float | None = None,
) -> BinaryMask:
    """Grow a 26-connected region from ``center`` (default: the VOI middle voxel).

    The intensity band is centred on the mean of the click's 3x3x3 neighbourhood,
    ignoring neighbours more than ``tolerance_hu`` away from the click voxel.
    Voxels equal to ``pad_value`` are never included; pass the VOI's pad value
    so padding cannot leak into the prediction.
    """
    data = voi.data
    center = tuple(int(c) for c in (center if center is not None else voi_center(voi.dims)))
    valid = np.ones(data.shape, dtype=bool) if pad_value is None else data != pad_value
    if not valid[center]:
        raise ClickSegError(f"click {center} falls on padding")

    # work inside the bounding box of the radius cap
    reach = [math.ceil(params.max_radius_mm / s) for s in voi.spacing]
    box = tuple(slice(max(0, c - r), min(n, c + r + 1)) for c, r, n in zip(center, reach, data.shape))
    local = tuple(c - b.start for c, b in zip(center, box))
    sub = data[box].astype(np.float64)
    sub_valid = valid[box]

    grids = np.ogrid[tuple(slice(b.start - c, b.stop - c) for b, c in zip(box, center))]
    dist2 = sum((g * s) ** 2 for g, s in zip(grids, voi.spacing))
    cap = dist2 <= params.max_radius_mm ** 2

    hood = tuple(slice(max(0, c - 1), c + 2) for c in local)
    seed_vals = sub[hood][sub_valid[hood]]
    # drop neighbours that differ from the click by more than the band, so a
    # click on the lesion rim does not average in background
    seed_vals = seed_vals[np.abs(seed_vals - sub[local]) <= params.tolerance_hu]
    mean = float(seed_vals.mean())

    allowed = cap & sub_valid
    grow = allowed & (np.abs(sub - mean) <= params.tolerance_hu)
    grow[local] = True
    region = _component_at(grow, local)
    region = closing(region, params.smoothing, 6) & allowed
    region[local] = True
    region = _component_at(region, local)

    out = np.zeros(data.shape, dtype=bool)
    out[box] = region
    return BinaryMask(out, voi.spacing)
