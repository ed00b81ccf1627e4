import itertools

import numpy as np
import pytest

from pseudograph.errors import InvalidInputError
from pseudograph.graph import IGNORED
from pseudograph.synth import (background_map, consistency_partial_labels, downsample_labels,
                               make_scene, simulate_cams, simulate_features)


def oracle_label(cam_values, alpha_low, alpha_high, threshold):
    """Scalar reimplementation for one node; index 0 is background."""
    top = max(cam_values)
    low = [(1.0 - top) ** alpha_low] + list(cam_values)
    high = [(1.0 - top) ** alpha_high] + list(cam_values)
    best_low = max(range(len(low)), key=lambda i: (low[i], -i))
    best_high = max(range(len(high)), key=lambda i: (high[i], -i))
    if best_low == best_high and low[best_low] >= threshold:
        return best_low
    return IGNORED


def test_scene_is_pure_function_of_seed():
    a, b = make_scene(7), make_scene(7)
    assert np.array_equal(a.image, b.image) and np.array_equal(a.gt, b.gt)
    assert not np.array_equal(a.gt, make_scene(8).gt)


def test_scene_without_shapes_is_background():
    s = make_scene(3, num_classes=1, shapes_per_class=0)
    assert not s.gt.any()
    assert s.image.min() >= 0 and s.image.max() <= 1


def test_scene_validation():
    with pytest.raises(InvalidInputError):
        make_scene(0, num_classes=0)
    with pytest.raises(InvalidInputError):
        make_scene(0, h=16)


def test_occupancy_over_many_seeds():
    for seed in range(100):
        s = make_scene(seed, h=64, w=64)
        frac = np.bincount(s.gt.ravel(), minlength=4) / s.gt.size
        assert frac[0] > 0 and frac[1:].min() >= 0.01, seed


def test_clean_cams_are_downsampled_indicators():
    s = make_scene(1)
    cams = simulate_cams(s)
    small = downsample_labels(s.gt, 4)
    assert cams.shape == (3, 32, 32)
    for c in range(1, 4):
        assert np.array_equal(cams[c - 1], (small == c).astype(float))
    assert not simulate_cams(s, blur_radius=1, miss_rate=1.0).any()


def test_cam_noise_deviation_bounded():
    for seed in range(20):
        s = make_scene(seed)
        ind = simulate_cams(s)
        noisy = simulate_cams(s, noise=0.1)
        assert noisy.min() >= 0 and noisy.max() <= 1
        assert np.abs(noisy - ind).max() <= 0.4


def test_cam_validation():
    with pytest.raises(InvalidInputError):
        simulate_cams(make_scene(0), miss_rate=1.5)


def test_noise_free_features_are_class_means():
    s = make_scene(2)
    f = simulate_features(s, noise_sigma=0.0)
    small = downsample_labels(s.gt, 4).ravel()
    for c in range(4):
        rows = f.features[small == c]
        assert np.array_equal(rows, np.broadcast_to(rows[0], rows.shape))
        assert np.linalg.norm(rows[0]) == pytest.approx(4.0, abs=1e-12)
    flat = simulate_features(s, class_sep=0.0, noise_sigma=0.0)
    assert not flat.features.any()


def test_features_are_linearly_separable_at_default_separation():
    hits = total = 0
    for seed in range(20):
        s = make_scene(seed)
        f = simulate_features(s, dim=16, class_sep=4.0, noise_sigma=1.0)
        y = downsample_labels(s.gt, 4).ravel()
        means = np.stack([f.features[y == c].mean(axis=0) for c in range(4)])
        pred = np.argmin(((f.features[:, None] - means[None]) ** 2).sum(axis=2), axis=1)
        hits += (pred == y).sum()
        total += y.size
    assert hits / total >= 0.95


def test_background_map_values():
    cams = np.array([[[0.0, 1.0, 0.5]]])
    assert background_map(cams, 4.0)[0].tolist() == [1.0, 0.0, 0.0625]
    assert background_map(cams, 32.0)[0, 2] == pytest.approx(2.3283064e-10, rel=1e-6)
    with pytest.raises(InvalidInputError):
        background_map(cams, 0.0)


def test_partial_labels_hand_cases():
    cams = np.zeros((2, 1, 4))
    cams[0, 0, 0] = 1.0  # certain class 1
    cams[1, 0, 2] = 0.45  # bg^l = 0.55^4 < 0.45
    cams[1, 0, 3] = 0.2  # bg^l wins low, cam wins high
    p = consistency_partial_labels(cams)
    assert p.labels.tolist() == [1, 0, 2, IGNORED]


def test_partial_labels_sweep_matches_oracle():
    grid = np.round(np.arange(0, 21) * 0.05, 2)
    pairs = list(itertools.product(grid, grid))
    cams = np.array(pairs).T.reshape(2, 1, len(pairs))
    for lo, hi, thr in [(4, 32, 0.3), (2, 8, 0.0), (4, 32, 0.6), (1, 3, 0.5)]:
        got = consistency_partial_labels(cams, lo, hi, thr).labels
        expect = [oracle_label(pair, lo, hi, thr) for pair in pairs]
        assert got.tolist() == expect


def test_perfect_cams_never_mislabel():
    for seed in range(50):
        s = make_scene(seed, h=64, w=64)
        p = consistency_partial_labels(simulate_cams(s))
        truth = downsample_labels(s.gt, 4).ravel()
        kept = p.labels != IGNORED
        assert np.array_equal(p.labels[kept], truth[kept])


def test_raising_alpha_high_keeps_foreground_labels():
    rng = np.random.default_rng(0)
    cams = rng.random((3, 8, 8)) * 0.8
    base = consistency_partial_labels(cams, 4, 8).labels > 0
    for hi in (16, 32, 64):
        assert np.all((consistency_partial_labels(cams, 4, hi).labels > 0) >= base)
    with pytest.raises(InvalidInputError):
        consistency_partial_labels(cams, 8, 8)
