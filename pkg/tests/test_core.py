import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oblivid.core import (ContractViolation, bitonic_cx_count, float_keys, maxpool2x2, next_pow2,
                          oaccess, oassign, oassign_vec, osort, osort_keys, owrite, relu)
from oblivid.trace import TraceRecorder


@given(st.booleans(), st.integers(-2**62, 2**62), st.integers(-2**62, 2**62))
def test_oassign_ints(c, a, b):
    assert oassign(c, a, b) == (a if c else b)


@given(st.booleans(), st.floats(allow_nan=False), st.floats(allow_nan=False))
def test_oassign_floats(c, a, b):
    assert oassign(c, a, b) == (a if c else b)


def test_oassign_special_floats():
    assert math.isnan(oassign(True, float("nan"), 1.0))
    assert oassign(False, float("nan"), float("inf")) == float("inf")
    assert math.copysign(1, oassign(True, -0.0, 0.0)) == -1


def test_oassign_vec():
    a = np.array([1.5, -2.0, np.inf])
    b = np.array([0.0, 7.0, 3.0])
    assert oassign_vec([True, False, True], a, b).tolist() == [1.5, 7.0, np.inf]
    rows = oassign_vec([False, True], np.ones((2, 3), np.uint8), np.zeros((2, 3), np.uint8))
    assert rows.tolist() == [[0, 0, 0], [1, 1, 1]]
    with pytest.raises(ContractViolation):
        oassign_vec([True], a, b)


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=257))
def test_osort_matches_sorted_with_index_ties(xs):
    recs = [(v, i) for i, v in enumerate(xs)]
    got = list(recs)
    osort(got, key_fn=lambda r: (r[0], r[1]))
    assert got == sorted(recs)


@given(st.lists(st.floats(allow_nan=False, width=64), min_size=1, max_size=70))
def test_osort_floats(xs):
    got = list(xs)
    osort(got)
    assert got == sorted(xs)


@given(st.lists(st.integers(-2**60, 2**60), min_size=1, max_size=200))
def test_osort_keys_kernel(xs):
    assert osort_keys(np.array(xs, np.int64)).tolist() == sorted(xs)


def test_float_keys_preserve_order():
    x = np.array([-np.inf, -3.5, -0.0, 0.0, 1e-300, 2.0, np.inf])
    k = float_keys(x)
    assert (np.diff(k) >= 0).all()


@pytest.mark.parametrize("n", range(1, 65))
def test_cx_count_closed_form(n):
    p = next_pow2(n)
    k = int(math.log2(p))
    assert osort(list(range(n, 0, -1))) == p // 2 * k * (k + 1) // 2 == bitonic_cx_count(n)


def test_osort_trace_depends_on_length_only(rng):
    digests = set()
    for _ in range(5):
        rec = TraceRecorder(1)
        osort(list(rng.integers(0, 9, 37)), rec=rec)
        digests.add(rec.digest())
    assert len(digests) == 1


def test_osort_empty_rejected():
    with pytest.raises(ContractViolation):
        osort([])


def test_oaccess_and_owrite(rng):
    a = rng.integers(0, 100, (16, 3))
    for i in range(16):
        assert (oaccess(a, i) == a[i]).all()
    lst = list(range(10))
    assert oaccess(lst, 4) == 4
    owrite(lst, 2, 99)
    assert lst[2] == 99
    arr = np.zeros(5, np.float64)
    owrite(arr, 3, -1.5)
    assert arr.tolist() == [0, 0, 0, -1.5, 0]
    with pytest.raises(ContractViolation):
        oaccess(a, 16)
    with pytest.raises(ContractViolation):
        owrite(lst, -1, 0)


def test_oaccess_trace_independent_of_index(rng):
    a = rng.integers(0, 100, 64)
    ds = set()
    for i in (0, 17, 63):
        rec = TraceRecorder(1)
        oaccess(a, i, rec)
        ds.add(rec.digest())
    assert len(ds) == 1


def test_relu_and_maxpool():
    assert relu(-3) == 0 and relu(5) == 5 and relu(-0.5) == 0.0
    assert maxpool2x2([1, 4, 2, 3]) == 4
    assert maxpool2x2([-1.0, -4.0, -2.0, -3.0]) == -1.0
