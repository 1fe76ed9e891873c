"""Patient-level held-out splits, stratified by source dataset."""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .manifest import LesionRecord, ManifestError, derive_seed


def held_out_count(n_patients: int, fraction: float) -> int:
    return max(1, math.floor(n_patients * fraction + 1e-9))


def make_split(records: list[LesionRecord], fraction: float = 0.10, seed: int = 0):
    """Return ``(train, held_out)`` with no patient on both sides.

    Within each dataset, ``max(1, floor(fraction * n_patients))`` patients are
    drawn for the held-out side. A dataset where that would leave no training
    patient is an error.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    patients_by_ds: dict[str, set[str]] = defaultdict(set)
    for r in records:
        if not r.patient_id:
            raise ManifestError(f"lesion {r.lesion_id!r} has no patient_id")
        patients_by_ds[r.dataset].add(r.patient_id)

    held = set()
    for ds in sorted(patients_by_ds):
        patients = sorted(patients_by_ds[ds])
        k = held_out_count(len(patients), fraction)
        if k >= len(patients):
            raise ManifestError(
                f"dataset {ds or '<unnamed>'!r}: {len(patients)} patient(s) cannot give a held-out "
                f"split of {k} and keep training data"
            )
        rng = np.random.default_rng(derive_seed(seed, f"split:{ds}"))
        held.update((ds, p) for p in rng.choice(patients, size=k, replace=False))

    train = [r for r in records if (r.dataset, r.patient_id) not in held]
    test = [r for r in records if (r.dataset, r.patient_id) in held]
    return train, test
