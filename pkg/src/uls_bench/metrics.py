"""Challenge evaluation: Dice, axis SMAPE, click-consistency and the weighted challenge score."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .recist import AxisPair, mask_axes_3d
from .volume import BinaryMask

log = logging.getLogger(__name__)

CS_WEIGHTS = {"SP": 0.8, "LAE": 0.05, "SAE": 0.05, "SCS": 0.1}
STD_CONVENTION = "population (ddof=0)"


def _arr(m) -> np.ndarray:
    return m.data if isinstance(m, BinaryMask) else np.asarray(m, dtype=bool)


def dice(a, b) -> float:
    """Sørensen-Dice overlap. Two empty masks score 1.0; empty vs non-empty scores 0.0."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def smape(pred: float, ref: float) -> float:
    """Per-item symmetric absolute percentage error, in [0, 1]; 0/0 is taken as 0."""
    denom = abs(pred) + abs(ref)
    if denom == 0:
        return 0.0
    return abs(pred - ref) / denom


def realign(pred, click_offset) -> np.ndarray:
    """Translate a mask by an integer offset; voxels leaving the frame are dropped."""
    arr = _arr(pred)
    offset = tuple(int(o) for o in click_offset)
    out = np.zeros_like(arr)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if abs(o) >= n:
            return out
        src.append(slice(max(0, -o), n - max(0, o)))
        dst.append(slice(max(0, o), n - max(0, -o)))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def overlap_region(shape, click_offset) -> np.ndarray:
    """Voxels of the target frame also covered by a frame displaced by ``click_offset``."""
    return realign(np.ones(shape, dtype=bool), click_offset)


def realigned_dice(a, click_a, b, click_b) -> float | None:
    """Dice of two VOI predictions compared in ``b``'s frame over the shared footprint.

    ``click_a``/``click_b`` are the scan-space click voxels the VOIs were centred on.
    Returns None when the footprints do not overlap.
    """
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError("group members must share the VOI shape")
    offset = np.subtract(click_a, click_b)
    region = overlap_region(a.shape, offset)
    if not region.any():
        log.warning("realignment offset %s leaves no overlap; pair excluded", tuple(offset))
        return None
    return dice(realign(a, offset) & region, b & region)


@dataclass
class ConsistencyGroup:
    lesion_id: str
    masks: list
    clicks: list

    def __post_init__(self):
        if len(self.masks) != len(self.clicks):
            raise ValueError("each group member needs a click coordinate")
        if len(self.masks) < 2:
            raise ValueError(f"consistency group {self.lesion_id!r} needs at least 2 members")


def consistency_score(g: ConsistencyGroup) -> float:
    """Mean realigned Dice over all member pairs (NaN if no pair overlaps)."""
    values = []
    for i, j in itertools.combinations(range(len(g.masks)), 2):
        d = realigned_dice(g.masks[i], g.clicks[i], g.masks[j], g.clicks[j])
        if d is not None:
            values.append(d)
    if not values:
        log.warning("consistency group %s has no overlapping pairs", g.lesion_id)
        return math.nan
    return float(np.mean(values))


def challenge_score(SP: float, LAE: float, SAE: float, SCS: float) -> float:
    """``0.8 SP + 0.05 LAE + 0.05 SAE + 0.1 SCS``; LAE/SAE are 1 - mean SMAPE."""
    parts = {"SP": SP, "LAE": LAE, "SAE": SAE, "SCS": SCS}
    for name, v in parts.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    return math.fsum(CS_WEIGHTS[k] * parts[k] for k in CS_WEIGHTS)


def mask_axes_or_zero(mask) -> AxisPair:
    m = mask if isinstance(mask, BinaryMask) else BinaryMask(mask)
    if not m.data.any():
        return AxisPair(0.0, 0.0)
    return mask_axes_3d(m)


@dataclass
class LesionScore:
    lesion_id: str
    lesion_type: str
    dice: float
    long_smape: float
    short_smape: float
    pred_long_mm: float = 0.0
    pred_short_mm: float = 0.0
    ref_long_mm: float = 0.0
    ref_short_mm: float = 0.0
    partition: str | None = None
    flags: list[str] = field(default_factory=list)


def score_lesion(pred, ref, lesion_id: str, lesion_type: str = "unknown", partition: str | None = None) -> LesionScore:
    pa, ra = mask_axes_or_zero(pred), mask_axes_or_zero(ref)
    return LesionScore(
        lesion_id=lesion_id,
        lesion_type=lesion_type,
        dice=dice(pred, ref),
        long_smape=smape(pa.long_mm, ra.long_mm),
        short_smape=smape(pa.short_mm, ra.short_mm),
        pred_long_mm=pa.long_mm,
        pred_short_mm=pa.short_mm,
        ref_long_mm=ra.long_mm,
        ref_short_mm=ra.short_mm,
        partition=partition,
    )


def _stats(values) -> dict:
    values = np.asarray(list(values), dtype=float)
    if len(values) == 0:
        return {"n": 0, "mean": None, "std": None}
    return {"n": int(len(values)), "mean": float(values.mean()), "std": float(values.std())}


def _bucket(scores) -> dict:
    return {
        "n": len(scores),
        "dice": _stats(s.dice for s in scores),
        "long_smape": _stats(s.long_smape for s in scores),
        "short_smape": _stats(s.short_smape for s in scores),
    }


def aggregate(records: list[LesionScore], group_scores: dict[str, float] | None = None) -> dict:
    """Build the report dictionary (per lesion, per type, per partition, aggregate).

    ``group_scores`` maps consistency-group id to its score; NaN entries are
    skipped. Without any group, SCS and CS are reported as null.
    """
    records = sorted(records, key=lambda r: r.lesion_id)
    group_scores = dict(sorted((group_scores or {}).items()))
    per_type = {t: _bucket([r for r in records if r.lesion_type == t])
                for t in sorted({r.lesion_type for r in records})}
    partitions = sorted({r.partition for r in records if r.partition})
    per_partition = {p: _bucket([r for r in records if r.partition == p]) for p in partitions}

    agg = {"n_lesions": len(records), "SP": None, "LAE": None, "SAE": None, "SCS": None, "CS": None}
    if records:
        agg["SP"] = float(np.mean([r.dice for r in records]))
        agg["LAE"] = 1.0 - float(np.mean([r.long_smape for r in records]))
        agg["SAE"] = 1.0 - float(np.mean([r.short_smape for r in records]))
    valid = [v for v in group_scores.values() if not math.isnan(v)]
    agg["n_consistency_groups"] = len(valid)
    if valid:
        agg["SCS"] = float(np.mean(valid))
    if records and valid:
        agg["CS"] = challenge_score(agg["SP"], agg["LAE"], agg["SAE"], agg["SCS"])

    return {
        "std_convention": STD_CONVENTION,
        "per_lesion": [
            {
                "lesion_id": r.lesion_id,
                "lesion_type": r.lesion_type,
                "partition": r.partition,
                "dice": r.dice,
                "long_smape": r.long_smape,
                "short_smape": r.short_smape,
                "pred_long_mm": r.pred_long_mm,
                "pred_short_mm": r.pred_short_mm,
                "ref_long_mm": r.ref_long_mm,
                "ref_short_mm": r.ref_short_mm,
                "flags": list(r.flags),
            }
            for r in records
        ],
        "per_type": per_type,
        "per_partition": per_partition,
        "consistency": {k: (None if math.isnan(v) else v) for k, v in group_scores.items()},
        "aggregate": agg,
    }


def format_report(report: dict) -> str:
    """Aligned-column text rendering of a report."""
    lines = [f"std: {report.get('std_convention', STD_CONVENTION)}", ""]
    header = f"{'type':<16}{'n':>5}  {'dice':>15}  {'long SMAPE':>15}  {'short SMAPE':>15}"

    def row(name, b):
        def ms(s):
            return "-" if s["mean"] is None else f"{s['mean']:.3f} ± {s['std']:.3f}"
        return f"{name:<16}{b['n']:>5}  {ms(b['dice']):>15}  {ms(b['long_smape']):>15}  {ms(b['short_smape']):>15}"

    lines.append(header)
    lines += [row(t, b) for t, b in report["per_type"].items()]
    if report.get("per_partition"):
        lines += ["", header.replace("type", "partition", 1)]
        lines += [row(p, b) for p, b in report["per_partition"].items()]
    lines.append("")
    for key in ("SP", "LAE", "SAE", "SCS", "CS"):
        v = report["aggregate"].get(key)
        lines.append(f"{key:<4} {'n/a' if v is None else f'{v:.4f}'}")
    return "\n".join(lines)
