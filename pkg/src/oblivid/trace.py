"""Access-trace recording.

A trace is the sequence of ``(op_id, array_id, line_index)`` observations an
attacker watching memory at cache-line granularity would see.  Events are kept
in a canonical run-length form: a run ``(op, arr, lo, hi)`` stands for the
events ``(op, arr, lo), (op, arr, lo + 1), ..., (op, arr, hi - 1)`` and
adjacent runs that continue each other are always merged, so two event
sequences are equal iff their canonical run sequences are equal.

Recording is shared between plain Python call sites and numba kernels: both
append into the same ``int64`` run buffer, and a full buffer is flushed into a
streaming SHA-256.
"""
from __future__ import annotations

import hashlib
import itertools
import weakref
import zlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

_LE = np.dtype(np.int64).byteorder in ("=", "<") and np.little_endian
EMPTY_DIGEST = hashlib.sha256(b"").hexdigest()

_BUF_ROWS = 1 << 16
_ids = itertools.count(1)
_RECORDERS: "weakref.WeakValueDictionary[int, TraceRecorder]" = weakref.WeakValueDictionary()


def op_id(name: str) -> int:
    """Stable small-integer tag for an operation site."""
    return zlib.crc32(name.encode()) & 0x7FFFFFFF


@dataclass(frozen=True)
class TraceEvent:
    op_id: int
    array_id: int
    line_index: int


class AccessTrace:
    """Canonical run list of a finished recording."""

    __slots__ = ("runs",)

    def __init__(self, runs: np.ndarray | None = None):
        if runs is None:
            runs = np.zeros((0, 4), np.int64)
        self.runs = canonicalize(np.asarray(runs, np.int64).reshape(-1, 4))

    @classmethod
    def from_events(cls, events) -> "AccessTrace":
        rows = [(e.op_id, e.array_id, e.line_index, e.line_index + 1) if isinstance(e, TraceEvent)
                else (e[0], e[1], e[2], e[2] + 1) for e in events]
        return cls(np.array(rows, np.int64).reshape(-1, 4))

    def __len__(self) -> int:
        return int((self.runs[:, 3] - self.runs[:, 2]).sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, AccessTrace) and np.array_equal(self.runs, other.runs)

    def __iter__(self) -> Iterator[TraceEvent]:
        for op, arr, lo, hi in self.runs.tolist():
            for line in range(lo, hi):
                yield TraceEvent(op, arr, line)

    def events(self) -> list[TraceEvent]:
        return list(self)

    def count(self, op: int | str) -> int:
        if isinstance(op, str):
            op = op_id(op)
        sel = self.runs[:, 0] == op
        return int((self.runs[sel, 3] - self.runs[sel, 2]).sum())


def canonicalize(runs: np.ndarray) -> np.ndarray:
    """Drop empty runs and merge runs that continue their predecessor."""
    runs = runs[runs[:, 3] > runs[:, 2]]
    if len(runs) < 2:
        return runs.copy()
    cont = ((runs[1:, 0] == runs[:-1, 0]) & (runs[1:, 1] == runs[:-1, 1])
            & (runs[1:, 2] == runs[:-1, 3]))
    if not cont.any():
        return runs.copy()
    starts = np.flatnonzero(np.concatenate(([True], ~cont)))
    ends = np.concatenate((starts[1:], [len(runs)])) - 1
    out = runs[starts].copy()
    out[:, 3] = runs[ends, 3]
    return out


def trace_digest(trace: AccessTrace) -> str:
    """Hex SHA-256 of the serialized canonical event list."""
    return hashlib.sha256(trace.runs.astype("<i8").tobytes()).hexdigest()


def first_divergence(a: AccessTrace, b: AccessTrace) -> int | None:
    """Index of the first differing event, or None when equal."""
    ra, rb = a.runs, b.runs
    pos = 0
    for i in range(min(len(ra), len(rb))):
        x, y = ra[i], rb[i]
        if (x == y).all():
            pos += int(x[3] - x[2])
            continue
        if x[0] != y[0] or x[1] != y[1] or x[2] != y[2]:
            return pos
        return pos + int(min(x[3], y[3]) - x[2])
    if len(ra) == len(rb):
        return None
    return pos


class TraceRecorder:
    """Append-only event recorder.

    ``cache_line_bytes`` fixes the observation granularity for the recorder's
    lifetime; ``1`` is byte-granular (strictest), ``64`` is the cache-line
    model.  Logical buffer names are normalized to integers in first-use
    order so allocator addresses never leak into comparisons.
    """

    def __init__(self, cache_line_bytes: int = 64, enabled: bool = True,
                 keep_events: bool = False):
        if cache_line_bytes < 1 or cache_line_bytes & (cache_line_bytes - 1):
            raise ValueError("cache_line_bytes must be a power of two")
        self.cache_line_bytes = int(cache_line_bytes)
        self.keep_events = keep_events
        self.sid = next(_ids)
        _RECORDERS[self.sid] = self
        self.buf = np.zeros((_BUF_ROWS, 4), np.int64)
        # [count, enabled, log2(line bytes), sink id]
        shift = self.cache_line_bytes.bit_length() - 1
        self.state = np.array([0, int(enabled), shift, self.sid], np.int64)
        self._hash = hashlib.sha256()
        self._flushed_events = 0
        self._kept: list[np.ndarray] = []
        self._names: dict[str, int] = {}

    @property
    def enabled(self) -> bool:
        return bool(self.state[1])

    @enabled.setter
    def enabled(self, value: bool) -> None:
        self.state[1] = int(value)

    def array_id(self, name: str) -> int:
        aid = self._names.get(name)
        if aid is None:
            aid = self._names[name] = len(self._names)
        return aid

    def lines(self, start: int, stop: int, itemsize: int = 1) -> tuple[int, int]:
        lb = self.cache_line_bytes
        return start * itemsize // lb, (stop * itemsize - 1) // lb + 1

    def run(self, op: int, arr: int, lo: int, hi: int) -> None:
        if hi <= lo or not self.state[1]:
            return
        n = int(self.state[0])
        buf = self.buf
        if n:
            last = buf[n - 1]
            if last[0] == op and last[1] == arr and last[3] == lo:
                last[3] = hi
                return
        if n == len(buf):
            self._flush()
            n = int(self.state[0])
        buf[n] = (op, arr, lo, hi)
        self.state[0] = n + 1

    def touch(self, op: int | str, name: str, index: int, itemsize: int = 1) -> None:
        """Record one element access (all lines the element spans)."""
        if not self.state[1]:
            return
        if isinstance(op, str):
            op = op_id(op)
        lo, hi = self.lines(index, index + 1, itemsize)
        self.run(op, self.array_id(name), lo, hi)

    def scan(self, op: int | str, name: str, start: int, stop: int, itemsize: int = 1) -> None:
        """Record a sequential pass over elements ``[start, stop)``, one event per line."""
        if not self.state[1] or stop <= start:
            return
        if isinstance(op, str):
            op = op_id(op)
        lo, hi = self.lines(start, stop, itemsize)
        self.run(op, self.array_id(name), lo, hi)

    def scan_array(self, op: int | str, name: str, arr: np.ndarray) -> None:
        self.scan(op, name, 0, arr.size, arr.itemsize)

    def absorb(self, other: "TraceRecorder") -> None:
        """Append another recorder's events (it must keep events), mapping its
        buffer names onto this recorder's ids."""
        ids = {v: self.array_id(k) for k, v in sorted(other._names.items(), key=lambda kv: kv[1])}
        for op, arr, lo, hi in other.trace().runs.tolist():
            self.run(op, ids[arr], lo, hi)

    def _flush(self) -> None:
        """Hash every buffered run but the last, which may still grow."""
        n = int(self.state[0])
        if n <= 1:
            return
        done = self.buf[: n - 1]
        self._hash.update(memoryview(done if _LE else done.astype("<i8")))
        self._flushed_events += int((done[:, 3] - done[:, 2]).sum())
        if self.keep_events:
            self._kept.append(done.copy())
        self.buf[0] = self.buf[n - 1]
        self.state[0] = 1

    def __bool__(self) -> bool:
        return True

    def __len__(self) -> int:
        n = int(self.state[0])
        tail = self.buf[:n]
        return self._flushed_events + int((tail[:, 3] - tail[:, 2]).sum())

    def digest(self) -> str:
        h = self._hash.copy()
        n = int(self.state[0])
        h.update(self.buf[:n].astype("<i8").tobytes())
        return h.hexdigest()

    def trace(self) -> AccessTrace:
        if not self.keep_events:
            raise RuntimeError("recorder was created with keep_events=False")
        n = int(self.state[0])
        return AccessTrace(np.concatenate(self._kept + [self.buf[:n]]))

    def events(self) -> list[TraceEvent]:
        return self.trace().events()


def flush_sink(sid: int) -> None:
    _RECORDERS[sid]._flush()


# Stand-in arguments for kernels invoked without a recorder.
NULL_BUF = np.zeros((1, 4), np.int64)


def kernel_args(rec: TraceRecorder | None) -> tuple[np.ndarray, np.ndarray]:
    if rec is None:
        return NULL_BUF, np.array([0, 0, 6, 0], np.int64)
    return rec.buf, rec.state
