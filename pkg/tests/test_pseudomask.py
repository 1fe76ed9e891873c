import numpy as np
import pytest

from conftest import disk, disk_measurement
from uls_bench.metrics import dice
from uls_bench.pseudomask import (
    BG,
    FG,
    PBG,
    PFG,
    Candidate,
    PseudoMaskParams,
    PseudoMaskResult,
    SeedParams,
    build_seeds,
    filter_pseudomasks,
    generate_pseudomask,
)
from uls_bench.recist import AxisPair, RecistMeasurement, fit_ellipse


def hu_phantom(noise=0.0, seed=0, shape=(64, 64), center=(32, 32), radius=12):
    truth = disk(shape, center, radius)
    img = np.where(truth, 80.0, -40.0)
    if noise:
        img = img + np.random.default_rng(seed).normal(0, noise, shape)
    return img, truth


class TestSeeds:
    def test_partition_and_construction(self):
        m = disk_measurement((32, 32), 12, angle=0.3)
        s = build_seeds(m, (64, 64))
        regions = [s.region(c) for c in (BG, FG, PBG, PFG)]
        assert all(r.any() for r in regions)
        assert (sum(r.astype(int) for r in regions) == 1).all()
        ellipse = fit_ellipse(m, (64, 64))
        assert not (s.region(FG) & ~ellipse).any()
        box = ~s.region(BG)
        xs, ys = np.nonzero(box)
        # BG is the complement of an axis-aligned box that contains the 0.2-dilated endpoint box
        assert box[xs.min():xs.max() + 1, ys.min():ys.max() + 1].all()
        assert xs.min() <= 32 - 12 - 0.2 * 24 + 1 and xs.max() >= 32 + 12 + 0.2 * 24 - 1

    def test_tiny_measurement_center_fallback(self):
        m = RecistMeasurement(0, ((20, 20), (23, 20)), ((21.5, 19), (21.5, 21)))
        s = build_seeds(m, (40, 40), SeedParams(ellipse_erode_px=2))
        fg = np.argwhere(s.region(FG))
        assert len(fg) == 1 and tuple(fg[0]) == (22, 20)  # round(21.5) = 22

    def test_explicit_amounts(self):
        m = disk_measurement((32, 32), 10)
        s = build_seeds(m, (64, 64), SeedParams(ellipse_dilate_px=3, ellipse_erode_px=2))
        ellipse = fit_ellipse(m, (64, 64))
        assert s.region(FG).sum() < ellipse.sum()


class TestGenerate:
    def test_exact_phantom_grabcut_wins(self):
        img, truth = hu_phantom()
        r = generate_pseudomask(img, disk_measurement((32, 32), 12, window=(20, 400)))
        assert r.rationale.startswith("grabcut_run_")
        assert r.chosen.long_err_px + r.chosen.short_err_px <= 1e-9
        assert dice(r.mask, truth) == 1.0

    def test_uniform_slice_falls_back_to_ellipse(self):
        m = disk_measurement((32, 32), 12, angle=0.4)
        r = generate_pseudomask(np.full((64, 64), 30.0), m)
        assert r.rationale == "ellipse_fallback"
        assert r.chosen.source == "ellipse"

    def test_candidate_count(self):
        img, _ = hu_phantom(5)
        with_meta = generate_pseudomask(img, disk_measurement((32, 32), 12))
        without = generate_pseudomask(img, disk_measurement((32, 32), 12, window=None))
        assert len(with_meta.candidates) == 4 and len(without.candidates) == 3
        assert with_meta.candidates[0].source == "grabcut:metadata"
        assert with_meta.candidates[-1].source == without.candidates[-1].source == "ellipse"

    def test_windows(self):
        img, _ = hu_phantom()
        r = generate_pseudomask(img, disk_measurement((32, 32), 12, window=(50, 350)))
        ws = [c.window for c in r.candidates]
        assert ws[0] == (50, 350)
        assert ws[1] == (pytest.approx(80.0), 100.0) and ws[2] == (pytest.approx(80.0), 200.0)

    def test_selection_optimal_and_first_tie(self):
        img, _ = hu_phantom(15, 3)
        r = generate_pseudomask(img, disk_measurement((32, 32), 11.5, angle=0.2))
        scores = [c.score for c in r.candidates]
        assert r.chosen.score == min(scores)
        assert r.chosen_index == scores.index(min(scores))

    def test_deterministic(self):
        img, _ = hu_phantom(10, 2)
        m = disk_measurement((32, 32), 12)
        a, b = generate_pseudomask(img, m), generate_pseudomask(img, m)
        assert a.summary() == b.summary()
        for ca, cb in zip(a.candidates, b.candidates):
            assert ca.mask.tobytes() == cb.mask.tobytes()

    def test_params_serializable(self):
        d = PseudoMaskParams().to_dict()
        assert d["grabcut"]["n_components"] == 5 and d["seeds"]["bbox_dilation_frac"] == 0.2


def fake_result(long_mm, short_mm):
    c = Candidate("ellipse", None, np.zeros((2, 2), bool), AxisPair(long_mm, short_mm), 0, 0, 0)
    return PseudoMaskResult([c], 0, "ellipse_fallback")


class TestFilter:
    REF = RecistMeasurement(0, ((0, 0), (20, 0)), ((10, 0), (10, 5)))

    @pytest.mark.parametrize("err,kept", [(0.0, True), (4.99, True), (5.0, True), (5.01, False), (12.0, False)])
    def test_boundary(self, err, kept):
        for res in (fake_result(20 + err, 5), fake_result(20, 5 + err), fake_result(20 + err, 5 + err)):
            assert bool(filter_pseudomasks([(res, self.REF)])) is kept

    def test_empty(self):
        assert filter_pseudomasks([]) == []

    def test_custom_tolerance(self):
        assert filter_pseudomasks([(fake_result(23, 5), self.REF)], tol_px=2) == []
