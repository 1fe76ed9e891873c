"""Lesion manifest CSV.

The first line is a version marker (``# uls-manifest v1``) followed by a normal
CSV header. Only ``lesion_id`` and ``patient_id`` are required; measurement
endpoints use DeepLesion's ``x1,y1,x2,y2`` ordering per axis. Relative paths
are resolved against the manifest's directory.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .recist import RecistMeasurement

MANIFEST_VERSION = 1
VERSION_LINE = f"# uls-manifest v{MANIFEST_VERSION}"

COLUMNS = [
    "lesion_id", "patient_id", "dataset", "image_path", "label_path", "lesion_type", "partition",
    "group_id", "click_x", "click_y", "click_z", "slice_index",
    "long_x1", "long_y1", "long_x2", "long_y2", "short_x1", "short_y1", "short_x2", "short_y2",
    "spacing_x", "spacing_y", "window_level", "window_width",
]
_CLICK = ("click_x", "click_y", "click_z")
_LONG = ("long_x1", "long_y1", "long_x2", "long_y2")
_SHORT = ("short_x1", "short_y1", "short_x2", "short_y2")


class ManifestError(ValueError):
    pass


def derive_seed(root_seed: int, key: str) -> int:
    """Stable 63-bit child seed for ``key``; independent of processing order."""
    digest = hashlib.sha256(f"{int(root_seed)}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class LesionRecord:
    lesion_id: str
    patient_id: str
    dataset: str = ""
    image_path: str = ""
    label_path: str = ""
    lesion_type: str = "unknown"
    partition: str = ""
    group_id: str = ""
    click_x: str = ""
    click_y: str = ""
    click_z: str = ""
    slice_index: str = ""
    long_x1: str = ""
    long_y1: str = ""
    long_x2: str = ""
    long_y2: str = ""
    short_x1: str = ""
    short_y1: str = ""
    short_x2: str = ""
    short_y2: str = ""
    spacing_x: str = ""
    spacing_y: str = ""
    window_level: str = ""
    window_width: str = ""
    base_dir: Path | None = None

    def _floats(self, names):
        vals = [getattr(self, n).strip() for n in names]
        if not all(vals):
            return None
        try:
            return [float(v) for v in vals]
        except ValueError as exc:
            raise ManifestError(f"{self.lesion_id}: non-numeric value in {names}") from exc

    def _opt_float(self, name):
        v = getattr(self, name).strip()
        return float(v) if v else None

    def resolve(self, rel: str) -> Path | None:
        if not rel:
            return None
        p = Path(rel)
        return p if p.is_absolute() or self.base_dir is None else self.base_dir / p

    @property
    def image(self) -> Path | None:
        return self.resolve(self.image_path)

    @property
    def label(self) -> Path | None:
        return self.resolve(self.label_path)

    @property
    def click(self) -> tuple[int, int, int] | None:
        vals = self._floats(_CLICK)
        return None if vals is None else tuple(int(round(v)) for v in vals)

    def measurement(self, spacing=None) -> RecistMeasurement | None:
        """RECIST measurement from the endpoint columns, or None if absent.

        ``spacing`` (mm) is used when the row carries no ``spacing_x/y``.
        """
        long_, short_ = self._floats(_LONG), self._floats(_SHORT)
        if long_ is None or short_ is None or not self.slice_index.strip():
            return None
        sp = self._floats(("spacing_x", "spacing_y")) or (list(spacing) if spacing else [1.0, 1.0])
        return RecistMeasurement(
            slice_index=int(float(self.slice_index)),
            long_axis=((long_[0], long_[1]), (long_[2], long_[3])),
            short_axis=((short_[0], short_[1]), (short_[2], short_[3])),
            in_plane_spacing=tuple(sp),
            window_level=self._opt_float("window_level"),
            window_width=self._opt_float("window_width"),
        )

    def row(self) -> dict:
        return {c: getattr(self, c) for c in COLUMNS}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and math.isfinite(v) and v.is_integer():
        return str(int(v))
    return str(v)


def make_record(base_dir=None, **values) -> LesionRecord:
    known = {f.name for f in fields(LesionRecord)} - {"base_dir"}
    unknown = set(values) - known
    if unknown:
        raise ManifestError(f"unknown manifest columns: {sorted(unknown)}")
    return LesionRecord(base_dir=base_dir, **{k: _fmt(v) for k, v in values.items()})


def validate(records: list[LesionRecord]) -> None:
    seen = set()
    for r in records:
        if not r.lesion_id:
            raise ManifestError("row without lesion_id")
        if r.lesion_id in seen:
            raise ManifestError(f"duplicate lesion_id {r.lesion_id!r}")
        seen.add(r.lesion_id)
        if not r.patient_id:
            raise ManifestError(f"lesion {r.lesion_id!r} has no patient_id")


def read_manifest(path) -> list[LesionRecord]:
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            if first.strip() != VERSION_LINE:
                raise ManifestError(f"{path}: unsupported manifest version line {first.strip()!r}")
        else:
            fh.seek(0)
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = {"lesion_id", "patient_id"} - set(reader.fieldnames)
        if missing:
            raise ManifestError(f"{path}: missing required columns {sorted(missing)}")
        extra = set(reader.fieldnames) - set(COLUMNS)
        if extra:
            raise ManifestError(f"{path}: unknown columns {sorted(extra)}")
        records = [make_record(path.parent, **{k: (v or "") for k, v in row.items()}) for row in reader]
    validate(records)
    return records


def write_manifest(records, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(VERSION_LINE + "\n")
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for r in records:
            row = r.row()
            # keep file references valid from the new manifest location
            for col, p in (("image_path", r.image), ("label_path", r.label)):
                if p is not None:
                    row[col] = os.path.relpath(p.resolve(), path.parent.resolve())
            writer.writerow(row)
