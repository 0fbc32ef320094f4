import numpy as np
import pytest

from oblivid.channel import (META_BYTES, CircularBuffer, ObjectRecord, consume, consumer_stub,
                             produce_frame, produce_masked, real_key, key_frame, simulate_channel)
from oblivid.core import ContractViolation
from oblivid.trace import TraceRecorder


def _obj(v, p=4, q=4):
    return np.full((q, p), v, np.uint8)


def test_fifo_and_dummy_refill():
    buf = CircularBuffer(10, 4, 4)
    produce_frame([_obj(1), _obj(2)], buf, 3, 0)
    produce_frame([_obj(3)], buf, 3, 1)
    assert buf.reals() == 3 and buf.sorted_ok()
    out = consume(buf, 2)
    assert [(o.frame_no, int(o.pixels[0, 0])) for o in out] == [(0, 1), (0, 2)]
    out = consume(buf, 2)
    assert [o.is_dummy for o in out] == [False, True]
    assert out[0].pixels[0, 0] == 3 and not out[1].pixels.any()
    assert buf.reals() == 0 and buf.sorted_ok()


def test_back_to_back_consumes_keep_fifo():
    buf = CircularBuffer(8, 1, 1)
    produce_frame([_obj(v, 1, 1) for v in (1, 2, 3)], buf, 3, 0)
    got = [int(o.pixels[0, 0]) for _ in range(3) for o in consume(buf, 1)]
    assert got == [1, 2, 3] and buf.sorted_ok()


def test_overwrite_counts_lost_reals():
    buf = CircularBuffer(4, 2, 2)
    assert produce_frame([_obj(1, 2, 2)] * 3, buf, 3, 0) == 0
    lost = produce_frame([_obj(2, 2, 2)] * 3, buf, 3, 1)
    assert lost == 2 and buf.reals() == 4
    # one frame-0 record survived at the tail, ahead of the three newer ones
    assert [o.frame_no for o in consume(buf, 4)] == [0, 1, 1, 1]


def test_masked_produce_zeroes_dummies(rng):
    buf = CircularBuffer(8, 3, 3)
    pix = rng.integers(1, 255, (3, 3, 3), dtype=np.uint8)
    produce_masked(pix, np.array([1, 0, 1]), buf, 5)
    out = consume(buf, 8)
    reals = [o for o in out if not o.is_dummy]
    assert len(reals) == 2 and all(o.frame_no == 5 for o in reals)
    assert not any(o.pixels.any() for o in out if o.is_dummy)


def test_channel_trace_independent_of_arrivals(rng):
    ds = set()
    for _ in range(3):
        buf = CircularBuffer(20, 4, 4)
        rec = TraceRecorder(1)
        for f in range(8):
            k = int(rng.integers(0, 6))
            produce_frame([_obj(f)] * k, buf, 5, f, rec)
            consume(buf, 3, rec)
        ds.add(rec.digest())
    assert len(ds) == 1


def test_keys_order_fifo():
    assert real_key(1, 0) < real_key(0, 4) < real_key(0, 0)
    assert key_frame(real_key(123, 3)) == 123


def test_simulation_no_loss_fixed_rate():
    rng = np.random.default_rng(1)
    arr = np.minimum(rng.poisson(2, 20000), 5)
    st = simulate_channel(arr, 5, 4, 50)
    assert st.reals_overwritten == 0
    assert st.reals_processed + st.dummies_processed == 4 * len(arr)
    assert st.fixed_rate(5, 4)
    assert {w.record_bytes for w in st.wire} == {1 + META_BYTES}


def test_simulation_without_drain_loses():
    st = simulate_channel([3], 5, 0, 50, 100)
    assert st.reals_overwritten == 300 - 48 and st.reals_processed == 0


def test_simulation_contracts():
    with pytest.raises(ContractViolation):
        simulate_channel([6], 5)
    with pytest.raises(ContractViolation):
        simulate_channel([], 5)
    with pytest.raises(ContractViolation):
        simulate_channel([1], 5, 51, 50)


def test_produce_consume_contracts():
    buf = CircularBuffer(4, 2, 2)
    with pytest.raises(ContractViolation):
        produce_frame([_obj(1, 2, 2)] * 3, buf, 2, 0)
    with pytest.raises(ContractViolation):
        produce_frame([_obj(1, 3, 3)], buf, 2, 0)
    with pytest.raises(ContractViolation):
        consume(buf, 5)
    with pytest.raises(ContractViolation):
        CircularBuffer(0, 2, 2)


def test_consumer_stub():
    recs = [ObjectRecord(np.array([[0, 200], [130, 0]], np.uint8), 1, 0), ObjectRecord.dummy(2, 2)]
    out = consumer_stub(recs)
    assert out.shape == (2, 1, 1) and out[0, 0, 0] == 72 and out[1, 0, 0] == 0
    assert consumer_stub([]).shape == (0, 0, 0)
