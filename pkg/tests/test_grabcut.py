import numpy as np
import pytest

from conftest import disk, disk_measurement
from uls_bench.metrics import dice
from uls_bench.pseudomask import BG, FG, PBG, PFG, GrabCutParams, SeedMap, build_seeds, grabcut
from uls_bench.pseudomask.grabcut import smoothness_weights


def phantom(noise, seed=0, shape=(64, 64), center=(32, 32), radius=12):
    truth = disk(shape, center, radius)
    img = np.where(truth, 200.0, 20.0)
    if noise:
        img = img + np.random.default_rng(seed).normal(0, noise, shape)
    return np.clip(img, 0, 255), truth


def seeds_for(truth_center, radius, shape):
    return build_seeds(disk_measurement(truth_center, radius), shape)


def test_noiseless_disk():
    img, truth = phantom(0)
    res = grabcut(img, seeds_for((32, 32), 12, img.shape))
    assert dice(res.mask, truth) >= 0.99


def test_noisy_disk():
    for seed in range(3):
        img, truth = phantom(10, seed)
        res = grabcut(img, seeds_for((32, 32), 12, img.shape))
        assert dice(res.mask, truth) >= 0.95


def test_hard_seeds_and_monotone_energy():
    rng = np.random.default_rng(8)
    for seed in range(5):
        img, _ = phantom(25, seed)
        img = img + rng.normal(0, 5, img.shape)
        s = seeds_for((32 + seed, 30), 10 + seed, img.shape)
        res = grabcut(img, s)
        assert res.mask[s.region(FG)].all()
        assert not res.mask[s.region(BG)].any()
        tr = np.asarray(res.energy_trace)
        assert np.all(np.diff(tr) <= 1e-6 * np.abs(tr[:-1]))


def test_degenerate_seeds():
    labels = np.full((8, 8), BG, np.int8)
    labels[3:5, 3:5] = FG
    res = grabcut(np.zeros((8, 8)), SeedMap(labels))
    assert res.degenerate
    np.testing.assert_array_equal(res.mask, labels == FG)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        grabcut(np.zeros((4, 4)), SeedMap(np.full((5, 5), PBG)))


def test_invalid_seed_code():
    with pytest.raises(ValueError):
        SeedMap(np.full((3, 3), 7))


def test_deterministic():
    img, _ = phantom(10, 1)
    s = seeds_for((32, 32), 12, img.shape)
    a, b = grabcut(img, s), grabcut(img, s)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert a.energy_trace == b.energy_trace


def test_smoothness_weights_formula():
    img = np.array([[0.0, 10.0], [10.0, 10.0]])
    p, q, w = smoothness_weights(img, 50.0)
    flat = img.ravel()
    d2 = (flat[p] - flat[q]) ** 2
    beta = 1 / (2 * d2.mean())
    dist = np.array([1.0 if {a, b} in ({0, 1}, {2, 3}, {0, 2}, {1, 3}) else np.sqrt(2) for a, b in zip(p, q)])
    np.testing.assert_allclose(w, 50 * np.exp(-beta * d2) / dist)
    assert len(p) == 6


def test_constant_image_beta_zero():
    _, _, w = smoothness_weights(np.full((3, 3), 5.0), 50.0)
    assert set(np.round(w, 9)) == {50.0, round(50 / np.sqrt(2), 9)}


def test_params_defaults():
    p = GrabCutParams()
    assert (p.n_components, p.gamma, p.iterations) == (5, 50.0, 5)
