"""Fixed-rate CPU to GPU object channel.

The producer pushes exactly ``k_max`` records per frame, padding with dummies,
into the head of a capacity-``C`` buffer and then obliviously sorts the whole
buffer so dummies sit at the head and the oldest real records at the tail.
The consumer takes exactly ``k_prime`` records from the tail every tick and
refills those slots with fresh dummies.  Records are moved whole by the
sorting network; nothing is ever indexed by a secret position.

Sort key (ascending, head to tail)::

    dummy: 0
    real:  1 << 40 | (FRAME_MAX - frame_no) << 8 | (255 - index_in_frame)

so reals are FIFO: the oldest frame, then the lowest intra-frame index, is
nearest the tail.
"""
from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from . import _nb
from .core import OP_OSORT, PAD_KEY, ContractViolation, maxpool2x2, next_pow2, relu
from .trace import TraceRecorder, kernel_args, op_id

__all__ = ["ObjectRecord", "CircularBuffer", "ChannelStats", "WireEntry", "produce_frame",
           "produce_masked",
           "consume", "simulate_channel", "consumer_stub", "relu", "maxpool2x2"]

OP_PUSH = op_id("channel.push")
OP_POP = op_id("channel.pop")
OP_REFILL = op_id("channel.refill")

REAL_BIT = 1 << 40
FRAME_MAX = (1 << 32) - 1
META_BYTES = 16             # priority + frame number carried with every record


def real_key(frame_no: int, index: int) -> int:
    return REAL_BIT | ((FRAME_MAX - frame_no) << 8) | (255 - index)


def key_frame(key: int) -> int:
    return FRAME_MAX - ((int(key) >> 8) & FRAME_MAX)


@dataclass
class ObjectRecord:
    """One fixed-size channel record; ``priority`` 0 marks a dummy."""
    pixels: np.ndarray
    priority: int = 0
    frame_no: int = 0

    @property
    def is_dummy(self) -> bool:
        return self.priority == 0

    @classmethod
    def dummy(cls, p: int, q: int) -> "ObjectRecord":
        return cls(np.zeros((q, p), np.uint8), 0, 0)


@dataclass(frozen=True)
class WireEntry:
    tick: int
    direction: str           # "in" (CPU to buffer) or "out" (buffer to GPU)
    count: int
    record_bytes: int


@dataclass
class ChannelStats:
    reals_processed: int = 0
    dummies_processed: int = 0
    reals_overwritten: int = 0
    max_delay: int = 0
    wire: list[WireEntry] = field(default_factory=list, repr=False)

    def to_dict(self, wire: bool = False) -> dict:
        d = asdict(self)
        if not wire:
            d.pop("wire")
        else:
            d["wire"] = [asdict(w) for w in self.wire]
        return d

    def fixed_rate(self, k_max: int, k_prime: int) -> bool:
        """Every tick moved exactly ``k_max`` in and ``k_prime`` out, all the same size."""
        sizes = {w.record_bytes for w in self.wire}
        return len(sizes) <= 1 and all(
            w.count == (k_max if w.direction == "in" else k_prime) for w in self.wire)


@njit(cache=True)
def sort_records_kernel(keys, rows, tb, ts, arr, rec_bytes):
    """Bitonic sort of ``keys`` carrying the matching ``rows`` (uint8) along."""
    n = keys.shape[0]
    nb = rows.shape[1]
    k = 2
    while k <= n:
        j = k // 2
        while j > 0:
            for i in range(n):
                l = i ^ j
                if l > i:
                    if ts[1]:
                        _nb.touch(tb, ts, OP_OSORT, arr, i, rec_bytes)
                        _nb.touch(tb, ts, OP_OSORT, arr, l, rec_bytes)
                    a = keys[i]
                    b = keys[l]
                    sw = (a > b) == ((i & k) == 0)
                    keys[i] = _nb.sel(sw, b, a)
                    keys[l] = _nb.sel(sw, a, b)
                    m = np.uint8(0) - np.uint8(sw)
                    for t in range(nb):
                        x = rows[i, t]
                        y = rows[l, t]
                        rows[i, t] = (y & m) | (x & ~m)
                        rows[l, t] = (x & m) | (y & ~m)
            j //= 2
        k *= 2


class CircularBuffer:
    """Capacity-``C`` record store; slot 0 is the head, slot ``C - 1`` the tail.

    The slot arrays are padded to a power of two with keys that sort past the
    tail, so the sorting network always runs on a fixed size.  A lock makes
    each operation atomic for a producer and consumer on separate threads.
    """

    def __init__(self, capacity: int, p: int, q: int):
        if capacity < 1 or p < 1 or q < 1:
            raise ContractViolation("capacity and record size must be >= 1")
        self.capacity, self.p, self.q = capacity, p, q
        n = next_pow2(capacity)
        self.keys = np.zeros(n, np.int64)
        self.keys[capacity:] = PAD_KEY
        self.rows = np.zeros((n, p * q), np.uint8)
        self.lock = threading.Lock()

    @property
    def record_bytes(self) -> int:
        return self.p * self.q + META_BYTES

    @property
    def head(self) -> int:
        return 0

    @property
    def tail(self) -> int:
        return self.capacity - 1

    def reals(self) -> int:
        return int((self.keys[: self.capacity] >= REAL_BIT).sum())

    def sorted_ok(self) -> bool:
        """No real record sits nearer the head than a dummy."""
        real = self.keys[: self.capacity] >= REAL_BIT
        return bool(np.all(np.diff(real.astype(np.int8)) >= 0))

    def record(self, slot: int) -> ObjectRecord:
        k = int(self.keys[slot])
        real = k >= REAL_BIT
        return ObjectRecord(self.rows[slot].reshape(self.q, self.p).copy(), int(real),
                            key_frame(k) if real else 0)

    def _sort(self, rec):
        tb, ts = kernel_args(rec)
        arr = rec.array_id("channel.buffer") if rec is not None else 0
        sort_records_kernel(self.keys, self.rows, tb, ts, arr, self.record_bytes)


def produce_frame(objs, buf: CircularBuffer, k_max: int, frame_no: int,
                  rec: TraceRecorder | None = None) -> int:
    """Push ``objs`` plus dummies (``k_max`` records) at the head, then sort.

    Returns the number of real records that were overwritten.
    """
    objs = list(objs)
    if len(objs) > k_max:
        raise ContractViolation(f"{len(objs)} objects exceed k_max={k_max}")
    pix = np.zeros((k_max, buf.q, buf.p), np.uint8)
    real = np.zeros(k_max, np.int64)
    for i, o in enumerate(objs):
        o = np.asarray(o.pixels if isinstance(o, ObjectRecord) else o)
        if o.shape != (buf.q, buf.p):
            raise ContractViolation(f"record shape {o.shape} is not {(buf.q, buf.p)}")
        pix[i] = o
        real[i] = 1
    return produce_masked(pix, real, buf, frame_no, rec)


@njit(cache=True)
def push_kernel(keys, rows, pix, real, frame_no, tb, ts, arr, rec_bytes):
    """Write ``k_max`` records at the head; a zero ``real`` flag makes a dummy.

    Returns how many real records were overwritten.
    """
    lost = np.int64(0)
    for i in range(pix.shape[0]):
        if ts[1]:
            _nb.touch(tb, ts, OP_PUSH, arr, i, rec_bytes)
        lost += np.int64(keys[i] >= REAL_BIT)
        r = np.int64(real[i] != 0)
        keys[i] = _nb.sel(r, REAL_BIT | ((FRAME_MAX - frame_no) << 8) | (255 - i), 0)
        m = np.uint8(0) - np.uint8(r)
        for t in range(pix.shape[1]):
            rows[i, t] = pix[i, t] & m
    return lost


def produce_masked(pixels: np.ndarray, real: np.ndarray, buf: CircularBuffer, frame_no: int,
                   rec: TraceRecorder | None = None) -> int:
    """Push ``k_max`` candidate records with per-record real flags, then sort.

    Dummy slots are zeroed by mask, so callers never branch on how many
    objects a frame actually holds.
    """
    k_max = len(real)
    if k_max > buf.capacity:
        raise ContractViolation(f"k_max={k_max} exceeds buffer capacity {buf.capacity}")
    pix = np.ascontiguousarray(pixels, np.uint8).reshape(k_max, buf.p * buf.q)
    tb, ts = kernel_args(rec)
    arr = rec.array_id("channel.buffer") if rec is not None else 0
    with buf.lock:
        lost = push_kernel(buf.keys, buf.rows, pix, np.asarray(real, np.int64), frame_no,
                           tb, ts, arr, buf.record_bytes)
        buf._sort(rec)
    return int(lost)


def consume(buf: CircularBuffer, k_prime: int,
            rec: TraceRecorder | None = None) -> list[ObjectRecord]:
    """Dequeue exactly ``k_prime`` records from the tail, refill with dummies, re-sort."""
    if not 0 <= k_prime <= buf.capacity:
        raise ContractViolation(f"k_prime={k_prime} outside 0..{buf.capacity}")
    with buf.lock:
        lo = buf.capacity - k_prime
        if rec is not None:
            rec.scan(OP_POP, "channel.buffer", lo, buf.capacity, buf.record_bytes)
            rec.scan(OP_REFILL, "channel.buffer", lo, buf.capacity, buf.record_bytes)
        out = [buf.record(s) for s in range(buf.capacity - 1, lo - 1, -1)]
        buf.keys[lo: buf.capacity] = 0
        buf.rows[lo: buf.capacity] = 0
        # fresh dummies belong at the head; waiting reals move back to the tail
        buf._sort(rec)
    return out


@njit(cache=True)
def simulate_kernel(arrivals, k_max, k_prime, cap, ticks, out, moved):
    """Key-only channel run; ``out`` = [reals, dummies, overwritten, max delay].

    ``moved[t]`` counts the records written in and taken out at tick ``t``.
    """
    n = 1
    while n < cap:
        n *= 2
    keys = np.zeros(n, np.int64)
    for i in range(cap, n):
        keys[i] = np.iinfo(np.int64).max
    rows = np.zeros((n, 0), np.uint8)
    tb = np.zeros((1, 4), np.int64)
    ts = np.zeros(4, np.int64)
    na = arrivals.shape[0]
    for t in range(ticks):
        a = arrivals[t % na]
        for i in range(k_max):
            out[2] += np.int64(keys[i] >= REAL_BIT)
            keys[i] = _nb.sel(i < a, REAL_BIT | ((FRAME_MAX - t) << 8) | (255 - i), 0)
            moved[t, 0] += 1
        sort_records_kernel(keys, rows, tb, ts, 0, 1)
        for s in range(cap - k_prime, cap):
            real = np.int64(keys[s] >= REAL_BIT)
            out[0] += real
            out[1] += 1 - real
            delay = t - (FRAME_MAX - ((keys[s] >> 8) & FRAME_MAX))
            out[3] = _nb.sel(real & np.int64(delay > out[3]), delay, out[3])
            keys[s] = 0
            moved[t, 1] += 1
    return keys


def simulate_channel(arrivals, k_max: int = 5, k_prime: int = 4, capacity: int = 50,
                     ticks: int | None = None, p: int = 1, q: int = 1) -> ChannelStats:
    """Deterministic discrete-time run: one frame produced and one consume per tick.

    ``arrivals[t]`` real objects arrive at tick ``t`` (cycled if shorter than
    ``ticks``).  Delay is measured in ticks from production to consumption.
    """
    arr = np.asarray(arrivals, np.int64).reshape(-1)
    if arr.size == 0:
        raise ContractViolation("arrivals must be non-empty")
    if arr.min() < 0 or arr.max() > k_max:
        raise ContractViolation(f"arrivals must lie in 0..k_max={k_max}")
    if not 1 <= k_max <= capacity or not 0 <= k_prime <= capacity:
        raise ContractViolation("need 1 <= k_max <= C and 0 <= k_prime <= C")
    ticks = len(arr) if ticks is None else ticks
    out = np.zeros(4, np.int64)
    moved = np.zeros((ticks, 2), np.int64)
    simulate_kernel(arr, k_max, k_prime, capacity, ticks, out, moved)
    size = p * q + META_BYTES
    wire = []
    for t, (n_in, n_out) in enumerate(moved.tolist()):
        wire.append(WireEntry(t, "in", n_in, size))
        wire.append(WireEntry(t, "out", n_out, size))
    return ChannelStats(int(out[0]), int(out[1]), int(out[2]), int(out[3]), wire)


# -- consumer stand-in ---------------------------------------------------------

@njit(cache=True)
def _relu_pool(img, out):
    h, w = out.shape
    for y in range(h):
        for x in range(w):
            best = np.int64(0)     # relu floor
            for dy in range(2):
                for dx in range(2):
                    v = np.int64(img[2 * y + dy, 2 * x + dx]) - 128
                    best = _nb.imax(best, v)
            out[y, x] = best


def consumer_stub(records: list[ObjectRecord]) -> np.ndarray:
    """Centered ReLU then 2x2 max-pool over every record, real or dummy alike."""
    if not records:
        return np.zeros((0, 0, 0), np.int64)
    q, p = records[0].pixels.shape
    out = np.zeros((len(records), q // 2, p // 2), np.int64)
    for i, r in enumerate(records):
        _relu_pool(r.pixels, out[i])
    return out
