import hashlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oblivid.trace import (EMPTY_DIGEST, AccessTrace, TraceEvent, TraceRecorder, canonicalize,
                           first_divergence, kernel_args, op_id, trace_digest)


def test_empty_trace_has_published_digest():
    assert trace_digest(AccessTrace()) == EMPTY_DIGEST == hashlib.sha256(b"").hexdigest()
    assert TraceRecorder().digest() == EMPTY_DIGEST


def test_identical_traces_identical_digests():
    a, b = TraceRecorder(1), TraceRecorder(1)
    for r in (a, b):
        r.scan("op", "buf", 0, 10)
        r.touch("op", "other", 3, 8)
    assert a.digest() == b.digest()


def test_one_event_changes_digest():
    a, b = TraceRecorder(1), TraceRecorder(1)
    a.touch("op", "buf", 3)
    b.touch("op", "buf", 4)
    assert a.digest() != b.digest()


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2), st.integers(0, 40)),
                min_size=1, max_size=60), st.data())
def test_mutated_event_changes_digest(events, data):
    i = data.draw(st.integers(0, len(events) - 1))
    op, arr, line = events[i]
    mutated = list(events)
    mutated[i] = (op, arr, line + 1)
    a = AccessTrace.from_events(events)
    b = AccessTrace.from_events(mutated)
    assert a != b
    assert trace_digest(a) != trace_digest(b)
    assert first_divergence(a, b) == i


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 20)), max_size=50))
def test_recorder_matches_event_list(events):
    rec = TraceRecorder(1, keep_events=True)
    for op, arr, line in events:
        rec.run(op, arr, line, line + 1)
    tr = rec.trace()
    assert [(e.op_id, e.array_id, e.line_index) for e in tr] == events
    assert rec.digest() == trace_digest(tr)
    assert len(rec) == len(events)


def test_runs_merge_canonically():
    runs = np.array([[1, 0, 0, 4], [1, 0, 4, 9], [1, 0, 9, 9], [2, 0, 9, 10]], np.int64)
    assert canonicalize(runs).tolist() == [[1, 0, 0, 9], [2, 0, 9, 10]]


def test_cache_line_granularity():
    rec = TraceRecorder(64, keep_events=True)
    rec.scan("s", "a", 0, 100, 8)           # 800 bytes -> lines 0..12
    rec.touch("t", "a", 7, 8)               # byte 56 -> line 0
    rec.touch("t", "a", 8, 8)               # byte 64 -> line 1
    ev = rec.events()
    assert [e.line_index for e in ev[:13]] == list(range(13))
    assert [e.line_index for e in ev[13:]] == [0, 1]


def test_line_bytes_must_be_power_of_two():
    with pytest.raises(ValueError):
        TraceRecorder(48)


def test_buffer_ids_follow_first_use():
    a, b = TraceRecorder(1), TraceRecorder(1)
    a.touch("op", "x", 0)
    a.touch("op", "y", 0)
    b.touch("op", "p", 0)
    b.touch("op", "q", 0)
    assert a.digest() == b.digest()


def test_disabled_recorder_is_silent():
    rec = TraceRecorder(1, enabled=False)
    rec.scan("op", "x", 0, 10)
    assert len(rec) == 0 and rec.digest() == EMPTY_DIGEST


def test_flush_keeps_digest_and_events():
    rec = TraceRecorder(1, keep_events=True)
    ref = hashlib.sha256()
    rows = []
    for i in range(200_000):       # alternate ops so runs never merge
        rec.touch(i % 2, "x", i)
        rows.append((i % 2, 0, i, i + 1))
    ref.update(np.array(rows, "<i8").tobytes())
    assert rec.digest() == ref.hexdigest()
    assert len(rec) == 200_000
    assert len(rec.events()) == 200_000


def test_kernel_args_for_missing_recorder():
    tb, ts = kernel_args(None)
    assert ts[1] == 0
    rec = TraceRecorder(8)
    tb, ts = kernel_args(rec)
    assert tb is rec.buf and ts[2] == 3


def test_op_ids_are_stable():
    assert op_id("osort.cx") == op_id("osort.cx") != op_id("oaccess")


def test_trace_event_iteration():
    tr = AccessTrace.from_events([TraceEvent(1, 2, 3), (1, 2, 4)])
    assert len(tr) == 2 and tr.count(1) == 2
    assert tr.runs.tolist() == [[1, 2, 3, 5]]
