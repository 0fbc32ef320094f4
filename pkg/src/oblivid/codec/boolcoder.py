"""Binary arithmetic coder over self-contained 16-bit chunks.

Each 2-byte chunk starts from the full interval ``[0, 65536)``.  A decision
with probability ``prob`` (of 256, for a 0 bit) splits the current width ``R``
at ``1 + ((R - 1) * prob >> 8)``; the low part codes 0, the high part 1.  A
chunk holds decisions for as long as ``R >= 2`` and closes at ``R == 1``, when
the interval is a single value which is stored as the chunk.  The decoder can
therefore tell from arithmetic alone whether the current chunk still has a
bit to give, which is what makes a fixed decode schedule possible.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from ..trace import TraceRecorder, op_id

CHUNK_BITS = 16
CHUNK_RANGE = 1 << CHUNK_BITS
OP_BITREAD = op_id("codec.bitread")


def split_point(r: int, prob: int) -> int:
    return 1 + (((r - 1) * prob) >> 8)


class ChunkEncoder:
    """Appends decisions; emits a little-endian u16 per closed chunk."""

    def __init__(self):
        self.out = bytearray()
        self.low = 0
        self.r = CHUNK_RANGE
        self.count = 0          # decisions in the open chunk
        self.max_count = 0      # max decisions in any chunk so far

    def encode(self, bit: int, prob: int) -> None:
        s = split_point(self.r, prob)
        if bit:
            self.low += s
            self.r -= s
        else:
            self.r = s
        self.count += 1
        if self.r == 1:
            self._close()

    def _close(self) -> None:
        self.out += int(self.low).to_bytes(2, "little")
        self.max_count = max(self.max_count, self.count)
        self.low, self.r, self.count = 0, CHUNK_RANGE, 0

    def finish(self) -> bytes:
        if self.count:
            self._close()
        return bytes(self.out)

    @property
    def chunks(self) -> int:
        return len(self.out) // 2 + (self.count > 0)


@dataclass
class ChunkState:
    """Decoder registers for the chunk under ``ptr``."""
    value: int = 0
    low: int = 0
    r: int = CHUNK_RANGE


def load_chunk(data: bytes | np.ndarray, ptr: int, rec: TraceRecorder | None = None,
               name: str = "bitstream") -> ChunkState:
    if rec is not None:
        rec.touch(OP_BITREAD, name, ptr // 2, 2)
    return ChunkState(int(data[ptr]) | int(data[ptr + 1]) << 8)


def entropy_decode_bit(is_dummy: bool, ptr: int, prob: int, state: ChunkState,
                       data: bytes | np.ndarray, rec: TraceRecorder | None = None,
                       name: str = "bitstream") -> int | None:
    """Decode one decision from the chunk at byte offset ``ptr``.

    The same arithmetic runs whether or not the call is a dummy or the chunk
    is exhausted; the outcome is folded in by masks, so a dummy call leaves
    ``state`` untouched.  Returns ``None`` for dummy or exhausted calls.
    """
    if rec is not None:
        rec.touch(OP_BITREAD, name, ptr // 2, 2)
    word = int(data[ptr]) | int(data[ptr + 1]) << 8
    live = int((not is_dummy) & (state.r >= 2) & (word == state.value))
    r = state.r
    s = split_point(max(r, 1), prob)
    bit = int(word >= state.low + s)
    m = -live
    state.low = (state.low + (s & -bit)) & m | state.low & ~m
    new_r = (r - s) & -bit | s & ~(-bit)
    state.r = new_r & m | r & ~m
    return (None, bit)[live]


@njit(cache=True)
def _max_decisions(probs):
    best = np.zeros(CHUNK_RANGE + 1, np.int64)
    for r in range(2, CHUNK_RANGE + 1):
        m = 0
        for p in probs:
            s = 1 + (((r - 1) * p) >> 8)
            a = best[s]
            b = best[r - s]
            if a > m:
                m = a
            if b > m:
                m = b
        best[r] = m + 1
    return best[CHUNK_RANGE]


@lru_cache(maxsize=None)
def chunk_decision_bound(probs: tuple[int, ...]) -> int:
    """Most decisions any chunk can hold when every prob is drawn from ``probs``.

    This is a property of the tree alone, so using it as ``N_chunk`` keeps the
    header independent of the content.
    """
    return int(_max_decisions(np.array(sorted(set(probs)), np.int64)))
