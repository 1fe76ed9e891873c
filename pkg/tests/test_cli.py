import csv
import json
import shutil

import numpy as np
import pytest

from synth import write_dataset
from uls_bench.cli import main, report_schema
from uls_bench.manifest import VERSION_LINE, read_manifest
from uls_bench.volume import connected_components, load_mask, load_volume


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    manifest = write_dataset(root / "raw", np.random.default_rng(99), n_scans=2, lesions_per_scan=2, extra_clicks=1,
                              datasets=("A",))
    voi_dir = root / "voi"
    assert main(["prepare-voi", "--manifest", str(manifest), "--out", str(voi_dir), "--workers", "1"]) == 0
    return manifest, voi_dir


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line]


class TestPrepareVoi:
    def test_outputs(self, dataset):
        manifest, voi_dir = dataset
        recs = read_manifest(voi_dir / "manifest.csv")
        assert len(recs) == len(read_manifest(manifest)) == 8
        for r in recs:
            img, lbl = load_volume(r.image), load_mask(r.label)
            assert img.dims == lbl.dims == (256, 256, 128)
            assert lbl.data[128, 128, 64]
            assert connected_components(lbl, 26)[1] == 1
            meta = json.loads((voi_dir / f"{r.lesion_id}_voi.json").read_text())
            assert meta["padded"] and img.data.min() == meta["pad_value"]
        assert read_jsonl(voi_dir / "errors.jsonl") == []

    def test_deterministic(self, dataset, tmp_path):
        manifest, voi_dir = dataset
        assert main(["prepare-voi", "--manifest", str(manifest), "--out", str(tmp_path), "--workers", "2"]) == 0
        a = read_manifest(voi_dir / "manifest.csv")
        b = read_manifest(tmp_path / "manifest.csv")
        assert [r.row() for r in a] == [r.row() for r in b]
        assert load_mask(b[0].label) == load_mask(a[0].label)

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.csv").write_text(VERSION_LINE + "\n")
        assert main(["prepare-voi", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path / "o")]) == 0
        assert read_manifest(tmp_path / "o" / "manifest.csv") == []

    def test_missing_file(self, tmp_path):
        (tmp_path / "m.csv").write_text(VERSION_LINE + "\nlesion_id,patient_id,image_path,label_path\n"
                                        "X,P,nope.nii.gz,nope_lbl.nii.gz\n")
        assert main(["prepare-voi", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path / "o")]) == 1
        errs = read_jsonl(tmp_path / "o" / "errors.jsonl")
        assert errs[0]["lesion_id"] == "X" and errs[0]["status"] == "error"

    def test_missing_manifest(self, tmp_path):
        assert main(["prepare-voi", "--manifest", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 1


class TestPseudomask:
    def test_ledger_and_filter(self, dataset, tmp_path):
        manifest, _ = dataset
        out = tmp_path / "pm"
        assert main(["pseudomask", "--manifest", str(manifest), "--out", str(out), "--filter-tol", "5"]) == 0
        ledger = read_jsonl(out / "ledger.jsonl")
        assert len(ledger) == len(read_manifest(manifest))
        kept = read_manifest(out / "kept.csv")
        assert len(kept) == sum(r["kept"] for r in ledger)
        assert all(r["long_err_px"] <= 5 and r["short_err_px"] <= 5 for r in ledger if r["kept"])
        m = load_mask(out / f"{ledger[0]['lesion_id']}_pseudo.nii.gz")
        assert m.dims[2] == 1 and m.data.any()

        out2 = tmp_path / "pm2"
        assert main(["pseudomask", "--manifest", str(manifest), "--out", str(out2)]) == 0
        again = read_jsonl(out2 / "ledger.jsonl")
        for a, b in zip(ledger, again):
            a.pop("kept"), b.pop("kept")
            assert a == b

    def test_row_without_measurement(self, dataset, tmp_path):
        manifest, _ = dataset
        rec = read_manifest(manifest)[0]
        (tmp_path / "m.csv").write_text(f"{VERSION_LINE}\nlesion_id,patient_id,image_path\nX,P,{rec.image}\n")
        assert main(["pseudomask", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path / "o")]) == 1


class TestEvaluate:
    def _self_predictions(self, voi_dir, pred_dir):
        pred_dir.mkdir(exist_ok=True)
        for r in read_manifest(voi_dir / "manifest.csv"):
            shutil.copy(r.label, pred_dir / f"{r.lesion_id}_pred.nii.gz")

    def test_self_evaluation(self, dataset, tmp_path):
        _, voi_dir = dataset
        self._self_predictions(voi_dir, tmp_path / "pred")
        out = tmp_path / "report.json"
        code = main(["evaluate", "--manifest", str(voi_dir / "manifest.csv"),
                     "--predictions", str(tmp_path / "pred"), "--out", str(out)])
        assert code == 0
        agg = json.loads(out.read_text())["aggregate"]
        assert agg["n_consistency_groups"] == 4
        for k in ("SP", "LAE", "SAE", "SCS", "CS"):
            assert agg[k] == 1.0
        assert out.with_suffix(".txt").exists()

    def test_missing_prediction_flagged(self, dataset, tmp_path):
        _, voi_dir = dataset
        self._self_predictions(voi_dir, tmp_path / "pred")
        victim = read_manifest(voi_dir / "manifest.csv")[0].lesion_id
        (tmp_path / "pred" / f"{victim}_pred.nii.gz").unlink()
        out = tmp_path / "r.json"
        assert main(["evaluate", "--manifest", str(voi_dir / "manifest.csv"),
                     "--predictions", str(tmp_path / "pred"), "--out", str(out)]) == 0
        row = next(r for r in json.loads(out.read_text())["per_lesion"] if r["lesion_id"] == victim)
        assert row["dice"] == 0.0 and row["flags"] == ["missing_prediction"]

    def test_click_seg_predictor(self, dataset, tmp_path):
        _, voi_dir = dataset
        out = tmp_path / "r.json"
        assert main(["evaluate", "--manifest", str(voi_dir / "manifest.csv"), "--predictor", "click-seg",
                     "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["budget"]["passed"] and report["aggregate"]["SP"] > 0.8
        assert report["aggregate"]["SCS"] >= 0.95
        rows = list(csv.DictReader(open(tmp_path / "timing.csv")))
        assert len(rows) == 8
        assert len(list((tmp_path / "predictions").glob("*_pred.nii.gz"))) == 8

    def test_budget_failure(self, dataset, tmp_path):
        _, voi_dir = dataset
        code = main(["evaluate", "--manifest", str(voi_dir / "manifest.csv"), "--predictor", "click-seg",
                     "--budget-seconds", "0.001", "--out", str(tmp_path / "r.json")])
        assert code == 2

    def test_consistency_and_report(self, dataset, tmp_path):
        _, voi_dir = dataset
        self._self_predictions(voi_dir, tmp_path / "pred")
        assert main(["consistency", "--manifest", str(voi_dir / "manifest.csv"),
                     "--predictions", str(tmp_path / "pred"), "--out", str(tmp_path / "c.json")]) == 0
        assert json.loads((tmp_path / "c.json").read_text())["SCS"] == 1.0
        assert main(["evaluate", "--manifest", str(voi_dir / "manifest.csv"),
                     "--predictions", str(tmp_path / "pred"), "--out", str(tmp_path / "r.json")]) == 0
        assert main(["report", "--report", str(tmp_path / "r.json"), "--out", str(tmp_path / "r.txt")]) == 0
        assert "CS" in (tmp_path / "r.txt").read_text()
        bad = json.loads((tmp_path / "r.json").read_text())
        bad["aggregate"]["SP"] = 3.0
        (tmp_path / "bad.json").write_text(json.dumps(bad))
        assert main(["report", "--report", str(tmp_path / "bad.json")]) == 2


class TestSplitCommand:
    def test_split(self, dataset, tmp_path):
        manifest, _ = dataset
        assert main(["split", "--manifest", str(manifest), "--out", str(tmp_path), "--fraction", "0.5"]) == 0
        train, held = read_manifest(tmp_path / "train.csv"), read_manifest(tmp_path / "heldout.csv")
        assert len(train) + len(held) == 8 and held
        assert not {r.patient_id for r in train} & {r.patient_id for r in held}
        assert train[0].image.exists()

    def test_unsplittable(self, tmp_path):
        (tmp_path / "m.csv").write_text(VERSION_LINE + "\nlesion_id,patient_id\nA,P1\nB,P1\n")
        assert main(["split", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path)]) == 1


def test_schema_shipped():
    assert report_schema()["type"] == "object"


def test_env_log_level(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("ULS_BENCH_LOG", "error")
    (tmp_path / "m.csv").write_text(VERSION_LINE + "\n")
    assert main(["split", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path)]) == 0
