import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from oblivid.core import ContractViolation
from oblivid.trace import TraceRecorder
from oblivid.tracking import (NULL, SIGMAS, TRUNCATE, _blur, detect_features, gaussian_kernel,
                              match_features, reference_keypoints, reference_match)


def _blocky(rng, side=48):
    base = np.kron(rng.integers(0, 255, (side // 8, side // 8)), np.ones((8, 8)))
    return np.clip(base + rng.normal(0, 3, (side, side)), 0, 255).astype(np.uint8)


def test_blur_matches_scipy(rng):
    img = rng.integers(0, 256, (30, 40)).astype(np.float64)
    for s in SIGMAS:
        want = gaussian_filter(img, s, mode="nearest", truncate=TRUNCATE)
        assert np.abs(_blur(img, s) - want).max() < 1e-9
    k = gaussian_kernel(1.6)
    assert abs(k.sum() - 1) < 1e-12 and len(k) == 2 * int(TRUNCATE * 1.6 + 0.5) + 1


def test_bright_dot_is_a_keypoint():
    img = np.zeros((64, 64), np.uint8)
    img[30:33, 40:43] = 255
    fs = detect_features(img, 64, 16)
    got = sorted((k.y, k.x, k.scale) for k in fs.keypoints())
    assert got == sorted(reference_keypoints(img, 64))
    assert any(abs(y - 31) <= 1 and abs(x - 41) <= 1 for y, x, _ in got)


def test_flat_image_has_no_keypoints():
    fs = detect_features(np.full((32, 32), 77, np.uint8), 32, 8)
    assert fs.keypoints() == [] and (fs.coords == NULL).all() and not fs.desc.any()


def test_matches_reference_detector(rng):
    for _ in range(4):
        img = _blocky(rng)
        ref = reference_keypoints(img, 256)
        fs = detect_features(img, 256, 256)
        assert sorted(map(tuple, fs.coords[fs.valid].tolist())) == sorted(ref)


def test_descriptors_normalized(rng):
    fs = detect_features(_blocky(rng), 128, 32)
    norms = np.linalg.norm(fs.desc[fs.valid], axis=1)
    assert np.allclose(norms, 1)


def test_self_matching_and_reference(rng):
    a = detect_features(_blocky(rng), 128, 32)
    b = detect_features(_blocky(rng), 128, 32)
    m = match_features(a, a)
    assert (m.index[a.valid] == np.flatnonzero(a.valid)).all()
    assert np.allclose(m.distance[a.valid], 0)
    assert (m.index[~a.valid] == NULL).all() and np.isinf(m.distance[~a.valid]).all()
    m2 = match_features(a, b)
    idx, dist = reference_match(a.desc, a.valid, b.desc, b.valid)
    assert (m2.index == idx).all()
    assert np.allclose(m2.distance[np.isfinite(dist)], dist[np.isfinite(dist)])


def test_ties_go_to_lower_index():
    from oblivid.tracking import FeatureSet, DESC_LEN
    d = np.zeros((3, DESC_LEN))
    d[:, 0] = 1.0
    fs = FeatureSet(np.zeros((3, 3), np.int64), np.ones(3, bool), d)
    assert match_features(fs, fs).index.tolist() == [0, 0, 0]


def test_traces_independent_of_image(rng):
    ds = set()
    for k in range(3):
        img = _blocky(rng, 32) if k else np.zeros((32, 32), np.uint8)
        rec = TraceRecorder(1)
        a = detect_features(img, 32, 8, rec)
        match_features(a, a, rec)
        ds.add(rec.digest())
    assert len(ds) == 1


def test_contracts():
    with pytest.raises(ContractViolation):
        detect_features(np.zeros((8, 32), np.uint8))
    with pytest.raises(ContractViolation):
        detect_features(np.zeros((32, 32), np.uint8), 8, 9)
    with pytest.raises(ContractViolation):
        detect_features(np.zeros((2, 32, 32), np.uint8))
