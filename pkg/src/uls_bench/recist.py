"""RECIST bidimensional geometry: ellipse/bbox fitting and long/short-axis measurement.

In-plane coordinates are ``(x, y)`` voxel indices, matching slices taken as
``volume.data[:, :, z]``. Lengths are measured between pixel centres, so a
single pixel has zero extent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .volume import BinaryMask, largest_component

_HULL_THRESHOLD = 2000


@dataclass(frozen=True)
class RecistMeasurement:
    slice_index: int
    long_axis: tuple[tuple[float, float], tuple[float, float]]
    short_axis: tuple[tuple[float, float], tuple[float, float]]
    in_plane_spacing: tuple[float, float] = (1.0, 1.0)
    window_level: float | None = None
    window_width: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "long_axis", _as_segment(self.long_axis))
        object.__setattr__(self, "short_axis", _as_segment(self.short_axis))
        object.__setattr__(self, "in_plane_spacing", tuple(float(s) for s in self.in_plane_spacing))
        if min(self.in_plane_spacing) <= 0:
            raise ValueError("in-plane spacing must be positive")
        if self.long_mm + 1e-9 < self.short_mm:
            raise ValueError(
                f"long axis ({self.long_mm:.3f} mm) is shorter than short axis ({self.short_mm:.3f} mm)"
            )

    def _length_mm(self, seg) -> float:
        (x1, y1), (x2, y2) = seg
        sx, sy = self.in_plane_spacing
        return math.hypot((x2 - x1) * sx, (y2 - y1) * sy)

    @property
    def long_mm(self) -> float:
        return self._length_mm(self.long_axis)

    @property
    def short_mm(self) -> float:
        return self._length_mm(self.short_axis)

    @property
    def has_window(self) -> bool:
        return self.window_level is not None and self.window_width is not None

    def endpoints(self) -> np.ndarray:
        return np.array([*self.long_axis, *self.short_axis], dtype=float)

    def check_bounds(self, dims) -> None:
        pts = self.endpoints()
        if (pts < 0).any() or (pts[:, 0] > dims[0] - 1).any() or (pts[:, 1] > dims[1] - 1).any():
            raise ValueError(f"measurement endpoints fall outside a {tuple(dims)} slice")


def _as_segment(seg):
    (x1, y1), (x2, y2) = seg
    return ((float(x1), float(y1)), (float(x2), float(y2)))


@dataclass(frozen=True)
class AxisPair:
    long_mm: float
    short_mm: float
    slice_index: int | None = None

    def __post_init__(self):
        if not self.long_mm >= self.short_mm >= 0:
            raise ValueError(f"invalid axis pair ({self.long_mm}, {self.short_mm})")


@dataclass(frozen=True)
class BBox:
    """Inclusive, axis-aligned box in pixel coordinates."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def mask(self, dims) -> np.ndarray:
        xs = np.arange(dims[0])[:, None]
        ys = np.arange(dims[1])[None, :]
        return (xs >= self.x_min) & (xs <= self.x_max) & (ys >= self.y_min) & (ys <= self.y_max)


def fit_ellipse(m: RecistMeasurement, dims) -> np.ndarray:
    """Rasterize the filled ellipse implied by a measurement on a ``dims[:2]`` grid.

    Centre is the long-axis midpoint; the major axis follows the long segment and
    the minor semi-axis is half the short-axis length. Geometry is evaluated in
    mm so anisotropic pixels are handled.
    """
    a, b = m.long_mm / 2.0, m.short_mm / 2.0
    if a <= 0 or b <= 0:
        raise ValueError("cannot fit an ellipse to a zero-length axis")
    sx, sy = m.in_plane_spacing
    (x1, y1), (x2, y2) = m.long_axis
    cx, cy = (x1 + x2) / 2.0 * sx, (y1 + y2) / 2.0 * sy
    ux, uy = (x2 - x1) * sx / m.long_mm, (y2 - y1) * sy / m.long_mm
    px = np.arange(dims[0])[:, None] * sx - cx
    py = np.arange(dims[1])[None, :] * sy - cy
    along = px * ux + py * uy
    across = -px * uy + py * ux
    return (along / a) ** 2 + (across / b) ** 2 <= 1.0 + 1e-9


def fit_bbox(m: RecistMeasurement, dilation_frac: float = 0.0, dims=None) -> BBox:
    """Bounding box of the four endpoints, grown by ``dilation_frac`` of its size per side."""
    if dilation_frac < 0:
        raise ValueError("dilation_frac must be non-negative")
    pts = m.endpoints()
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    dx, dy = (x1 - x0) * dilation_frac, (y1 - y0) * dilation_frac
    x0, x1, y0, y1 = x0 - dx, x1 + dx, y0 - dy, y1 + dy
    if dims is not None:
        x0, x1 = max(x0, 0.0), min(x1, dims[0] - 1.0)
        y0, y1 = max(y0, 0.0), min(y1, dims[1] - 1.0)
    return BBox(float(x0), float(x1), float(y0), float(y1))


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one 4-neighbour in the background (grid edge included)."""
    mask = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(2, 1), border_value=0)
    return mask & ~interior


def _diameter(points: np.ndarray) -> tuple[float, int, int]:
    """Largest pairwise distance and the indices of one pair attaining it."""
    cand = np.arange(len(points))
    if len(points) > _HULL_THRESHOLD:
        try:
            cand = np.sort(ConvexHull(points).vertices)
        except QhullError:  # collinear sets
            pass
    sub = points[cand]
    best, bi, bj = -1.0, 0, 0
    for start in range(0, len(sub), 512):
        block = sub[start:start + 512]
        d2 = ((block[:, None, :] - sub[None, :, :]) ** 2).sum(axis=-1)
        flat = int(np.argmax(d2))
        i, j = divmod(flat, d2.shape[1])
        if d2[i, j] > best:
            best, bi, bj = float(d2[i, j]), start + i, j
    return math.sqrt(best), int(cand[bi]), int(cand[bj])


def axes_2d_detail(mask, spacing=(1.0, 1.0)):
    """Return ``(long_mm, short_mm, long_endpoints_px)`` for a 2D mask."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("expected a 2D mask")
    if not mask.any():
        raise ValueError("cannot measure an empty mask")
    comp = largest_component(mask, 8)
    idx = np.argwhere(boundary_pixels(comp))
    pts = idx * np.asarray(spacing, dtype=float)
    long_mm, i, j = _diameter(pts)
    if long_mm == 0.0:
        return 0.0, 0.0, (tuple(idx[i]), tuple(idx[j]))
    ux, uy = (pts[j] - pts[i]) / long_mm
    proj = pts @ np.array([-uy, ux])
    short_mm = float(proj.max() - proj.min())
    return long_mm, min(short_mm, long_mm), (tuple(idx[i]), tuple(idx[j]))


def mask_axes_2d(mask, spacing=(1.0, 1.0)) -> tuple[float, float]:
    """Long axis = diameter of the largest component; short axis = extent perpendicular to it."""
    long_mm, short_mm, _ = axes_2d_detail(mask, spacing)
    return long_mm, short_mm


def mask_axes_3d(mask: BinaryMask) -> AxisPair:
    """Axes of the axial slice with the longest long axis (ties go to the lower slice)."""
    if not mask.data.any():
        raise ValueError("cannot measure an empty mask")
    comp = largest_component(mask, 26)
    spacing = mask.spacing[:2]
    best = None
    for z in np.flatnonzero(comp.any(axis=(0, 1))):
        long_mm, short_mm = mask_axes_2d(comp[:, :, z], spacing)
        if best is None or long_mm > best.long_mm:
            best = AxisPair(long_mm, short_mm, int(z))
    return best


def axis_error_px(pred: AxisPair, ref: RecistMeasurement) -> tuple[float, float]:
    """Absolute long/short length differences in pixels (mean in-plane spacing)."""
    px = sum(ref.in_plane_spacing) / 2.0
    return abs(pred.long_mm - ref.long_mm) / px, abs(pred.short_mm - ref.short_mm) / px
