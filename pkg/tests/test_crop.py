import numpy as np
import pytest

from oblivid.core import ContractViolation
from oblivid.trace import TraceRecorder
from oblivid.vision.crop import ObjectImage, crop_object, naive_crop, reference_resize, resize_object


def test_crop_matches_slice(rng):
    f = rng.integers(0, 256, (40, 50), dtype=np.uint8)
    for _ in range(100):
        q, p = rng.integers(1, 40), rng.integers(1, 50)
        t, l = rng.integers(0, 40 - q + 1), rng.integers(0, 50 - p + 1)
        b, r = t + rng.integers(0, q), l + rng.integers(0, p)
        o = crop_object(f, (t, l, b, r), p, q)
        rt, rl, rb, rr = o.roi
        assert o.pixels.shape == (q, p)
        assert (o.pixels[rt:rb + 1, rl:rr + 1] == f[t:b + 1, l:r + 1]).all()
        assert (o.pixels == naive_crop(f, (t, l, b, r), p, q)).all()


def test_crop_window_pulled_inside_frame(rng):
    f = rng.integers(0, 256, (20, 20), dtype=np.uint8)
    o = crop_object(f, (18, 17, 19, 19), 8, 6)
    assert (o.pixels == f[14:20, 12:20]).all()
    assert o.roi == (4, 5, 5, 7)


def test_crop_trace_hides_box(rng):
    f = rng.integers(0, 256, (24, 24), dtype=np.uint8)
    ds = set()
    for box in ((0, 0, 0, 0), (10, 3, 17, 9), (20, 20, 23, 23)):
        rec = TraceRecorder(1)
        crop_object(f, box, 8, 8, rec)
        ds.add(rec.digest())
    assert len(ds) == 1


def test_crop_contracts(rng):
    f = np.zeros((10, 10), np.uint8)
    with pytest.raises(ContractViolation):
        crop_object(f, (0, 0, 5, 5), 4, 4)
    with pytest.raises(ContractViolation):
        crop_object(f, (0, 0, 10, 3), 4, 4)
    with pytest.raises(ContractViolation):
        crop_object(f, (0, 0, 1, 1), 11, 4)


def test_resize_accuracy(rng):
    worst = 0.0
    for _ in range(200):
        q, p = rng.integers(1, 40, 2)
        obj = rng.integers(0, 256, (q, p), dtype=np.uint8)
        t, l = rng.integers(0, q), rng.integers(0, p)
        roi = (t, l, rng.integers(t, q), rng.integers(l, p))
        oh, ow = rng.integers(1, 48, 2)
        out = resize_object(obj, roi, out_shape=(oh, ow))
        worst = max(worst, float(np.abs(out - reference_resize(obj, roi, (oh, ow))).max()))
    assert worst <= 1.0


def test_resize_identity_and_object_image(rng):
    obj = rng.integers(0, 256, (12, 9), dtype=np.uint8)
    assert (resize_object(obj, (0, 0, 11, 8)) == obj).all()
    img = ObjectImage(obj, (2, 2, 2, 2))
    assert (resize_object(img) == obj[2, 2]).all()
    with pytest.raises(ValueError):
        resize_object(obj)
    with pytest.raises(ContractViolation):
        resize_object(obj, (0, 0, 1, 1), out_shape=(0, 3))


def test_resize_trace_hides_roi(rng):
    obj = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    ds = set()
    for roi in ((0, 0, 15, 15), (3, 4, 3, 4), (5, 0, 9, 15)):
        rec = TraceRecorder(1)
        resize_object(obj, roi, rec)
        ds.add(rec.digest())
    assert len(ds) == 1
