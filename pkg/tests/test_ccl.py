import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oblivid.core import ContractViolation
from oblivid.trace import TraceRecorder
from oblivid.vision.ccl import (detect_bboxes, detect_bboxes_striped, naive_detect_bboxes,
                                reference_boxes)


def test_simple_blobs():
    m = np.zeros((10, 12), np.uint8)
    m[1:3, 1:4] = 1
    m[5, 5] = m[6, 6] = 1           # diagonal neighbours join
    m[8:10, 10:12] = 255
    res = detect_bboxes(m, 8)
    assert sorted(res.real()) == [(1, 1, 2, 3), (5, 5, 6, 6), (8, 10, 9, 11)]
    assert not res.overflow


def test_u_shape_merges():
    m = np.zeros((5, 5), np.uint8)
    m[:, 0] = m[:, 4] = m[4, :] = 1
    assert detect_bboxes(m, 4).real() == [(0, 0, 4, 4)]


@given(arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24)),
              elements=st.integers(0, 1)))
def test_matches_flood_fill(mask):
    ref = reference_boxes(mask)
    n = max(1, int(mask.sum()))
    assert sorted(detect_bboxes(mask, n).real()) == ref
    for s in (2, 4, 8):
        assert sorted(detect_bboxes_striped(mask, n, s).real()) == ref


def test_overflow_flag():
    m = np.zeros((1, 9), np.uint8)
    m[0, ::2] = 1
    assert detect_bboxes(m, 2).overflow
    assert not detect_bboxes(m, 5).overflow


def test_naive_labeller_agrees(rng):
    m = (rng.random((20, 20)) < 0.2).astype(np.uint8)
    assert sorted(naive_detect_bboxes(m, 200).real()) == sorted(detect_bboxes(m, 200).real())


def test_workers_give_same_boxes_and_trace(rng):
    m = (rng.random((32, 32)) < 0.1).astype(np.uint8)
    r1, r2 = TraceRecorder(1), TraceRecorder(1)
    a = detect_bboxes_striped(m, 32, 8, r1, workers=1)
    b = detect_bboxes_striped(m, 32, 8, r2, workers=4)
    assert (a.boxes == b.boxes).all()
    assert r1.digest() == r2.digest()


@pytest.mark.parametrize("stripes", [1, 8])
def test_trace_independent_of_mask(rng, stripes):
    ds = set()
    for p in (0.0, 0.1, 0.6):
        rec = TraceRecorder(1)
        detect_bboxes_striped((rng.random((16, 16)) < p).astype(np.uint8), 8, stripes, rec)
        ds.add(rec.digest())
    assert len(ds) == 1


def test_contracts():
    with pytest.raises(ContractViolation):
        detect_bboxes(np.zeros(4), 4)
    with pytest.raises(ContractViolation):
        detect_bboxes(np.zeros((4, 4)), 0)
    with pytest.raises(ContractViolation):
        detect_bboxes_striped(np.zeros((4, 4)), 4, 0)
