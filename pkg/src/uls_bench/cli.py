"""``uls-bench`` command line.

Exit codes: 0 success, 1 input error, 2 budget or validation failure.
Log level comes from ``ULS_BENCH_LOG`` (default INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .budget import RuntimeBudget, enforce_budget
from .clickseg import ClickSegParams, segment_click
from .manifest import LesionRecord, ManifestError, derive_seed, make_record, read_manifest, write_manifest
from .metrics import ConsistencyGroup, aggregate, consistency_score, format_report, score_lesion
from .pseudomask import PseudoMaskParams, generate_pseudomask, passes_filter
from .pseudomask.grabcut import GrabCutParams
from .split import make_split
from .voi import VoiError, VoiSpec, extract_voi, sample_center, write_voi
from .volume import BinaryMask, VolumeLoadError, load_mask, load_volume, save_volume

log = logging.getLogger("uls_bench")

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2
PRED_SUFFIX = "_pred.nii.gz"
PREDICTORS = ("click-seg",)
_INPUT_ERRORS = (OSError, VolumeLoadError, VoiError, ManifestError, ValueError)


def report_schema() -> dict:
    return json.loads(resources.files("uls_bench").joinpath("schemas/report.schema.json").read_text())


def validate_report(report: dict) -> None:
    jsonschema.validate(report, report_schema())


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _write_errors(out_dir: Path, errors: list[dict]) -> None:
    with open(out_dir / "errors.jsonl", "w") as fh:
        for e in errors:
            fh.write(json.dumps(e) + "\n")


# ---------------------------------------------------------------------------
# split


def cmd_split(args) -> int:
    records = read_manifest(args.manifest)
    train, held = make_split(records, args.fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(train, out / "train.csv")
    write_manifest(held, out / "heldout.csv")
    log.info("split: %d train / %d held-out lesions", len(train), len(held))
    return EXIT_OK


# ---------------------------------------------------------------------------
# prepare-voi


def _prepare_one(job):
    record, out_dir, root_seed = job
    try:
        scan = load_volume(record.image)
        mask = load_mask(record.label)
        seed = derive_seed(root_seed, record.lesion_id)
        center = record.click
        if center is None or not mask.data[center]:
            center = sample_center(mask, seed)
        sample = extract_voi(
            scan, mask, center, VoiSpec(rng_seed=seed),
            provenance={"lesion_id": record.lesion_id, "patient_id": record.patient_id},
        )
        if sample.oversized:
            return {"lesion_id": record.lesion_id, "status": "skipped", "reason": "lesion larger than VOI"}
        paths = write_voi(sample, out_dir, record.lesion_id)
    except _INPUT_ERRORS as exc:
        return {"lesion_id": record.lesion_id, "status": "error", "reason": f"{type(exc).__name__}: {exc}"}
    voi_rec = make_record(
        out_dir,
        lesion_id=record.lesion_id, patient_id=record.patient_id, dataset=record.dataset,
        image_path=paths["image"].name, label_path=paths["label"].name,
        lesion_type=record.lesion_type, partition=record.partition, group_id=record.group_id,
        click_x=center[0], click_y=center[1], click_z=center[2],
    )
    return {"lesion_id": record.lesion_id, "status": "ok", "record": voi_rec}


def cmd_prepare_voi(args) -> int:
    records = read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _map(_prepare_one, [(r, out, args.seed) for r in records], args.workers)
    errors = [r for r in results if r["status"] == "error"]
    for r in results:
        if r["status"] != "ok":
            log.warning("%s: %s (%s)", r["lesion_id"], r["status"], r["reason"])
    write_manifest([r["record"] for r in results if r["status"] == "ok"], out / "manifest.csv")
    _write_errors(out, [r for r in results if r["status"] != "ok"])
    return EXIT_INPUT if errors else EXIT_OK


# ---------------------------------------------------------------------------
# pseudomask


def _pseudomask_one(job):
    record, out_dir, root_seed, filter_tol = job
    try:
        scan = load_volume(record.image)
        m = record.measurement(spacing=scan.spacing[:2])
        if m is None:
            raise ManifestError(f"{record.lesion_id}: row has no RECIST measurement")
        if not 0 <= m.slice_index < scan.dims[2]:
            raise ManifestError(f"{record.lesion_id}: slice {m.slice_index} outside the scan")
        slice_hu = scan.data[:, :, m.slice_index]
        params = PseudoMaskParams(grabcut=GrabCutParams(seed=derive_seed(root_seed, record.lesion_id) % 2**31))
        result = generate_pseudomask(slice_hu, m, params)
    except _INPUT_ERRORS as exc:
        return {"lesion_id": record.lesion_id, "status": "error", "reason": f"{type(exc).__name__}: {exc}"}
    mask_path = out_dir / f"{record.lesion_id}_pseudo.nii.gz"
    spacing = (*m.in_plane_spacing, scan.spacing[2])
    save_volume(BinaryMask(result.mask[:, :, None], spacing), mask_path)
    row = {
        "lesion_id": record.lesion_id,
        "status": "ok",
        "slice_index": m.slice_index,
        "mask_path": mask_path.name,
        **result.summary(),
        "params": params.to_dict(),
    }
    row["kept"] = None if filter_tol is None else passes_filter(row["long_err_px"], row["short_err_px"], filter_tol)
    return row


def cmd_pseudomask(args) -> int:
    records = read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _map(_pseudomask_one, [(r, out, args.seed, args.filter_tol) for r in records], args.workers)
    ok = [r for r in rows if r["status"] == "ok"]
    errors = [r for r in rows if r["status"] != "ok"]
    with open(out / "ledger.jsonl", "w") as fh:
        for r in ok:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    _write_errors(out, errors)
    for e in errors:
        log.error("%s: %s", e["lesion_id"], e["reason"])
    if args.filter_tol is not None:
        kept = {r["lesion_id"] for r in ok if r["kept"]}
        write_manifest([r for r in records if r.lesion_id in kept], out / "kept.csv")
        log.info("filter: kept %d of %d pseudo-masks (tol %.2f px)", len(kept), len(ok), args.filter_tol)
    return EXIT_INPUT if errors else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / consistency


def _pad_value_for(record: LesionRecord):
    sidecar = record.image.with_name(record.image.name.replace("_img.nii.gz", "_voi.json"))
    if sidecar != record.image and sidecar.exists():
        meta = json.loads(sidecar.read_text())
        return meta["pad_value"] if meta.get("padded") else None
    return None


def _predict_click_seg(record: LesionRecord, pred_dir: Path) -> Path:
    voi = load_volume(record.image)
    mask = segment_click(voi, params=ClickSegParams(), pad_value=_pad_value_for(record))
    path = pred_dir / f"{record.lesion_id}{PRED_SUFFIX}"
    save_volume(mask, path)
    return path


def run_predictor(records, pred_dir: Path, budget: RuntimeBudget, workers: int = 1):
    """Run click-seg on every VOI under the runtime budget, exporting predictions."""
    pred_dir.mkdir(parents=True, exist_ok=True)
    by_id = {r.lesion_id: r for r in records}
    return enforce_budget(list(by_id), lambda i: _predict_click_seg(by_id[i], pred_dir), budget, workers)


def _load_pred(record: LesionRecord, pred_dir: Path, like: BinaryMask):
    path = pred_dir / f"{record.lesion_id}{PRED_SUFFIX}"
    if not path.exists():
        return BinaryMask(np.zeros(like.dims, bool), like.spacing), ["missing_prediction"]
    pred = load_mask(path)
    if pred.dims != like.dims:
        raise ManifestError(f"{record.lesion_id}: prediction {pred.dims} does not match reference {like.dims}")
    return pred, []


def _score_one(job):
    record, pred_dir = job
    ref = load_mask(record.label)
    pred, flags = _load_pred(record, pred_dir, ref)
    s = score_lesion(pred, ref, record.lesion_id, record.lesion_type or "unknown", record.partition or None)
    s.flags.extend(flags)
    return s


def _groups(records):
    groups: dict[str, list[LesionRecord]] = {}
    for r in records:
        if r.group_id:
            groups.setdefault(r.group_id, []).append(r)
    return {g: rs for g, rs in sorted(groups.items()) if len(rs) >= 2}


def _group_score(job):
    gid, members, pred_dir = job
    masks, clicks = [], []
    for r in members:
        if r.click is None:
            raise ManifestError(f"group {gid}: lesion {r.lesion_id} has no click coordinate")
        ref = load_mask(r.label)
        masks.append(_load_pred(r, pred_dir, ref)[0])
        clicks.append(r.click)
    return gid, consistency_score(ConsistencyGroup(gid, masks, clicks))


def _resolve_predictions(args, records, report_dir: Path):
    """Return ``(prediction dir, budget report or None)``."""
    if args.predictions:
        return Path(args.predictions), None
    budget = RuntimeBudget(max_seconds=args.budget_seconds)
    rep = run_predictor(records, report_dir / "predictions", budget, args.workers)
    rep.write_timing_log(report_dir / "timing.csv")
    return report_dir / "predictions", rep


def cmd_evaluate(args) -> int:
    records = read_manifest(args.manifest)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pred_dir, budget_rep = _resolve_predictions(args, records, out.parent)

    scores = _map(_score_one, [(r, pred_dir) for r in records], args.workers)
    groups = _groups(records)
    group_scores = dict(_map(_group_score, [(g, ms, pred_dir) for g, ms in groups.items()], args.workers))
    report = aggregate(scores, group_scores)
    if budget_rep is not None:
        report["budget"] = {
            "passed": budget_rep.passed,
            "max_seconds": budget_rep.budget.max_seconds,
            "lesions_per_job": budget_rep.budget.lesions_per_job,
            "job_seconds": budget_rep.job_seconds,
        }
    for s in scores:
        if s.flags:
            log.warning("%s: %s", s.lesion_id, ", ".join(s.flags))

    out.write_text(json.dumps(report, indent=2))
    out.with_suffix(".txt").write_text(format_report(report) + "\n")
    print(format_report(report))
    try:
        validate_report(report)
    except jsonschema.ValidationError as exc:
        log.error("report failed schema validation: %s", exc.message)
        return EXIT_FAIL
    if budget_rep is not None and not budget_rep.passed:
        return EXIT_FAIL
    return EXIT_OK


def cmd_consistency(args) -> int:
    records = read_manifest(args.manifest)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pred_dir, _ = _resolve_predictions(args, [r for r in records if r.group_id], out.parent)
    groups = _groups(records)
    scores = dict(_map(_group_score, [(g, ms, pred_dir) for g, ms in groups.items()], args.workers))
    valid = [v for v in scores.values() if v == v]
    payload = {
        "groups": {g: (v if v == v else None) for g, v in scores.items()},
        "SCS": float(np.mean(valid)) if valid else None,
    }
    out.write_text(json.dumps(payload, indent=2))
    print(f"SCS {payload['SCS'] if payload['SCS'] is not None else 'n/a'} over {len(valid)} group(s)")
    return EXIT_OK


def cmd_report(args) -> int:
    report = json.loads(Path(args.report).read_text())
    try:
        validate_report(report)
    except jsonschema.ValidationError as exc:
        log.error("invalid report: %s", exc.message)
        return EXIT_FAIL
    text = format_report(report)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uls-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--manifest", required=True, help="lesion manifest CSV")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, default=0, help="root seed (split per lesion id)")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("split", help="patient-level held-out split")
    common(p, "output directory for train.csv / heldout.csv")
    p.add_argument("--fraction", type=float, default=0.10)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("prepare-voi", help="extract click-centred VOIs")
    common(p, "output directory")
    p.set_defaults(func=cmd_prepare_voi)

    p = sub.add_parser("pseudomask", help="GrabCut pseudo-masks from RECIST measurements")
    common(p, "output directory")
    p.add_argument("--filter-tol", type=float, default=None, help="keep masks with both axis errors <= this (px)")
    p.set_defaults(func=cmd_pseudomask)

    for name, func, help_ in (
        ("evaluate", cmd_evaluate, "score predictions against reference VOIs"),
        ("consistency", cmd_consistency, "click-consistency score only"),
    ):
        p = sub.add_parser(name, help=help_)
        common(p, "output JSON path")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--predictions", help=f"directory with <lesion_id>{PRED_SUFFIX} files")
        src.add_argument("--predictor", choices=PREDICTORS, default="click-seg")
        p.add_argument("--budget-seconds", type=float, default=RuntimeBudget().max_seconds,
                       help="wall-clock budget per 100-lesion job when running a predictor")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="validate a report JSON and print it as text")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default=None, help="optional text output path")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("ULS_BENCH_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ManifestError, OSError, VolumeLoadError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
