"""Pseudo-mask generation from RECIST measurements and the axis-error training filter."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..recist import AxisPair, RecistMeasurement, axis_error_px, fit_bbox, fit_ellipse, mask_axes_2d
from ..volume import morph, normalize_window
from .grabcut import BG, FG, PBG, PFG, GrabCutParams, SeedMap, grabcut

log = logging.getLogger(__name__)

ELLIPSE_SOURCE = "ellipse"


@dataclass(frozen=True)
class SeedParams:
    bbox_dilation_frac: float = 0.2
    # None -> max(2, 10% of the long axis) / max(1, 20% of the short axis), in px
    ellipse_dilate_px: int | None = None
    ellipse_erode_px: int | None = None
    connectivity: int = 4


@dataclass(frozen=True)
class PseudoMaskParams:
    seeds: SeedParams = SeedParams()
    grabcut: GrabCutParams = GrabCutParams()
    # half-widths (HU) of the windows centred on the mean intensity inside the ellipse
    ellipse_half_widths: tuple[float, ...] = (50.0, 100.0)
    selection: str = "sum"  # "sum" or "max" of the long/short pixel errors

    def to_dict(self) -> dict:
        return asdict(self)


def _px(m: RecistMeasurement, mm: float) -> float:
    return mm / (sum(m.in_plane_spacing) / 2.0)


def build_seeds(m: RecistMeasurement, dims, params: SeedParams = SeedParams()) -> SeedMap:
    """Four-region GrabCut seeding from a measurement.

    FG is the eroded ellipse (or its centre pixel when erosion empties it), PFG
    the dilated ellipse minus FG, PBG the rest of the dilated box and BG
    everything outside the box. The box is the dilated endpoint bounding box,
    grown if needed to contain the dilated ellipse.
    """
    dims = tuple(int(d) for d in dims[:2])
    m.check_bounds(dims)
    ellipse = fit_ellipse(m, dims)
    dil = params.ellipse_dilate_px or max(2, int(round(0.1 * _px(m, m.long_mm))))
    ero = params.ellipse_erode_px or max(1, int(round(0.2 * _px(m, m.short_mm))))

    fg = morph(ellipse, "erode", ero, params.connectivity) if ellipse.any() else ellipse
    if not fg.any():
        (x1, y1), (x2, y2) = m.long_axis
        fg = np.zeros(dims, dtype=bool)
        fg[int(round((x1 + x2) / 2)), int(round((y1 + y2) / 2))] = True
    pfg = morph(ellipse | fg, "dilate", dil, params.connectivity) & ~fg

    box = fit_bbox(m, params.bbox_dilation_frac, dims).mask(dims)
    xs, ys = np.nonzero(pfg | fg)
    box[xs.min():xs.max() + 1, ys.min():ys.max() + 1] = True

    labels = np.full(dims, BG, dtype=np.int8)
    labels[box] = PBG
    labels[pfg] = PFG
    labels[fg] = FG
    return SeedMap(labels)


@dataclass
class Candidate:
    source: str
    window: tuple[float, float] | None  # (level, width) in HU
    mask: np.ndarray
    axes: AxisPair
    long_err_px: float
    short_err_px: float
    score: float

    def summary(self) -> dict:
        return {
            "source": self.source,
            "window": list(self.window) if self.window else None,
            "long_mm": self.axes.long_mm,
            "short_mm": self.axes.short_mm,
            "long_err_px": self.long_err_px,
            "short_err_px": self.short_err_px,
            "score": self.score,
            "foreground_px": int(self.mask.sum()),
        }


@dataclass
class PseudoMaskResult:
    candidates: list[Candidate]
    chosen_index: int
    rationale: str
    warnings: list[str] = field(default_factory=list)

    @property
    def chosen(self) -> Candidate:
        return self.candidates[self.chosen_index]

    @property
    def mask(self) -> np.ndarray:
        return self.chosen.mask

    def summary(self) -> dict:
        return {
            "chosen_index": self.chosen_index,
            "rationale": self.rationale,
            "chosen_source": self.chosen.source,
            "long_err_px": self.chosen.long_err_px,
            "short_err_px": self.chosen.short_err_px,
            "candidates": [c.summary() for c in self.candidates],
            "warnings": list(self.warnings),
        }


def _score(long_err: float, short_err: float, how: str) -> float:
    if how == "sum":
        return long_err + short_err
    if how == "max":
        return max(long_err, short_err)
    raise ValueError(f"unknown selection metric {how!r}")


def _candidate(source, window, mask, m, how) -> Candidate:
    if mask.any():
        axes = AxisPair(*mask_axes_2d(mask, m.in_plane_spacing))
    else:
        axes = AxisPair(0.0, 0.0)
    le, se = axis_error_px(axes, m)
    return Candidate(source, window, mask, axes, le, se, _score(le, se, how))


def candidate_windows(slice_hu, m: RecistMeasurement, params: PseudoMaskParams):
    """``(name, level, width)`` for every GrabCut run, in run order."""
    windows = []
    if m.has_window:
        windows.append(("metadata", float(m.window_level), float(m.window_width)))
    else:
        log.info("measurement has no window metadata; skipping that run")
    ellipse = fit_ellipse(m, np.shape(slice_hu))
    mean_hu = float(np.asarray(slice_hu, dtype=np.float64)[ellipse].mean())
    for hw in params.ellipse_half_widths:
        windows.append((f"ellipse_mean_pm{hw:g}", mean_hu, 2.0 * hw))
    return windows


def generate_pseudomask(slice_hu, m: RecistMeasurement, params: PseudoMaskParams = PseudoMaskParams()) -> PseudoMaskResult:
    """Run GrabCut under each intensity window, add the ellipse itself, keep the best.

    Candidates are ranked by their measurement error against ``m`` (pixels);
    ties keep the earlier candidate, so GrabCut runs precede the ellipse.
    """
    slice_hu = np.asarray(slice_hu)
    seeds = build_seeds(m, slice_hu.shape, params.seeds)
    candidates, warnings = [], []
    for name, level, width in candidate_windows(slice_hu, m, params):
        res = grabcut(normalize_window(slice_hu, level, width), seeds, params.grabcut)
        if res.degenerate:
            warnings.append(f"grabcut:{name}: degenerate seeds")
        candidates.append(_candidate(f"grabcut:{name}", (level, width), res.mask, m, params.selection))
    candidates.append(_candidate(ELLIPSE_SOURCE, None, fit_ellipse(m, slice_hu.shape), m, params.selection))

    scores = [c.score for c in candidates]
    best = int(np.argmin(scores))  # first minimum
    rationale = "ellipse_fallback" if candidates[best].source == ELLIPSE_SOURCE else f"grabcut_run_{best}"
    return PseudoMaskResult(candidates, best, rationale, warnings)


def passes_filter(long_err_px: float, short_err_px: float, tol_px: float = 5.0) -> bool:
    return long_err_px <= tol_px and short_err_px <= tol_px


def filter_pseudomasks(results, tol_px: float = 5.0) -> list:
    """Keep ``(result, measurement)`` pairs whose chosen mask is within ``tol_px`` on both axes."""
    kept = []
    for result, m in results:
        le, se = axis_error_px(result.chosen.axes, m)
        if passes_filter(le, se, tol_px):
            kept.append((result, m))
    return kept
