"""Oblivious OVC decoder.

Per unit (a row of blocks, or a frame with frame-level padding):

1. ``parse_kernel`` walks the token tree on a fixed schedule of
   ``n_chunks * n_chunk`` iterations, one node fetch and one bit decode each,
   emitting one tuple key per iteration (``0`` for dummies).
2. One zero tuple per coefficient slot is appended; the list is sorted, a
   forward pass turns every fill zero shadowed by a decoded value into a
   dummy, and a second sort packs the real tuples at the tail.
3. The tail is read off in slot order; blocks are dequantized, inverse
   transformed, predicted and clamped.

Tuple key layout: ``flag << 50 | index << 17 | fill << 16 | (value + 32768)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .. import _nb
from ..core import OP_OACCESS, OP_OSORT, bitonic_sort_kernel, next_pow2, PAD_KEY
from ..trace import TraceRecorder, kernel_args, op_id
from .boolcoder import OP_BITREAD
from .container import (HEADER_BYTES, SLOTS, DecodeError, Header, container_size,
                        parse_header)
from .predict import N_MODES, OP_CAND, inter_kernel, intra_candidates, select_rows
from .transform import ZIGZAG, dequant_inverse_kernel
from .tree import PACKED

OP_TUPLE = op_id("codec.tuple")
OP_FILL = op_id("codec.fill")
OP_DEDUP = op_id("codec.dedup")
OP_ASSIGN = op_id("codec.assign")
OP_RECON = op_id("codec.recon")

FLAG_SHIFT = 50
INDEX_SHIFT = 17
FILL_BIT = 1 << 16
VALUE_BIAS = 32768


class CoeffTuple(NamedTuple):
    flag: int
    index: int
    value: int


def pack_tuple(flag: int, index: int, value: int, fill: int = 0) -> int:
    if not flag:
        return 0
    return (1 << FLAG_SHIFT) | (index << INDEX_SHIFT) | (fill << 16) | (value + VALUE_BIAS)


def unpack_key(k: int) -> CoeffTuple:
    k = int(k)
    if (k >> FLAG_SHIFT) == 0:
        return CoeffTuple(0, 0, 0)
    return CoeffTuple(1, (k >> INDEX_SHIFT) & ((1 << 33) - 1), (k & 0xFFFF) - VALUE_BIAS)


@njit(cache=True)
def parse_kernel(data, n_chunk, nodes, p_u, keys, tb, ts, bs_id, node_id, out_id):
    """Fixed-schedule token-tree walk; returns the iteration count."""
    n_chunks = data.shape[0] // 2
    n_nodes = nodes.shape[0]
    it = 0
    cur = np.int64(1)
    reg = np.int64(0)
    pos = np.int64(0)
    for c in range(n_chunks):
        if ts[1]:
            _nb.touch(tb, ts, OP_BITREAD, bs_id, c, 2)
        v = np.int64(data[2 * c]) | (np.int64(data[2 * c + 1]) << 8)
        low = np.int64(0)
        r = np.int64(65536)
        for _k in range(n_chunk):
            avail = np.int64(r >= 2)
            idx = _nb.sel(avail, cur, 0)
            # node fetch: full scan of the table
            if ts[1]:
                _nb.scan(tb, ts, OP_OACCESS, node_id, 0, n_nodes, 8)
            w = np.int64(0)
            for m in range(n_nodes):
                w = _nb.sel(m == idx, nodes[m], w)
            prob = w & 0xFF
            s = 1 + (((r - 1) * prob) >> 8)
            bit = np.int64(v >= low + s)
            low = _nb.sel(avail & bit, low + s, low)
            r = _nb.sel(avail, _nb.sel(bit, r - s, s), r)
            n0 = (w >> 8) & 0xFF
            n1 = (w >> 16) & 0xFF
            acc = (w >> 26) & 1
            sign = (w >> 27) & 1
            end0 = (w >> 28) & 1
            end1 = (w >> 29) & 1
            eob0 = (w >> 30) & 1
            base = w >> 32
            ends = _nb.sel(bit, end1, end0) & avail
            eob = eob0 & (1 - bit) & avail
            mag = base + reg
            val = _nb.sel(sign & bit, -mag, mag)
            reg = _nb.sel(avail & acc, reg * 2 + bit, reg)
            reg = _nb.sel(ends, 0, reg)
            live = ends & np.int64(pos < p_u)
            real = live & (1 - eob)
            key = (np.int64(1) << 50) | (pos << 17) | (val + 32768)
            if ts[1]:
                _nb.touch(tb, ts, OP_TUPLE, out_id, it, 8)
            keys[it] = _nb.sel(real, key, 0)
            nxt = _nb.sel(eob, (pos // 19 + 1) * 19, pos + 1)
            pos = _nb.sel(live, nxt, pos)
            cur = _nb.sel(avail, _nb.sel(bit, n1, n0), cur)
            it += 1
    return it


@njit(cache=True)
def fill_kernel(keys, start, p_u, tb, ts, out_id):
    for i in range(p_u):
        if ts[1]:
            _nb.touch(tb, ts, OP_FILL, out_id, start + i, 8)
        keys[start + i] = (np.int64(1) << 50) | (np.int64(i) << 17) | (1 << 16) | 32768


@njit(cache=True)
def dedup_kernel(keys, n, tb, ts, out_id):
    """A tuple with the same (flag, index) as its predecessor becomes a dummy."""
    if ts[1]:
        _nb.scan(tb, ts, OP_DEDUP, out_id, 0, n, 8)
    prev = np.int64(-1)
    for i in range(n):
        k = keys[i]
        g = k >> 17
        keys[i] = _nb.sel(g == prev, 0, k)
        prev = g


@njit(cache=True)
def assign_kernel(keys, n, p_u, vals, tb, ts, out_id):
    """Read the last ``p_u`` sorted tuples into ``vals`` (flattened, slot order)."""
    if ts[1]:
        _nb.scan(tb, ts, OP_ASSIGN, out_id, n - p_u, n, 8)
    for i in range(p_u):
        vals[i] = (keys[n - p_u + i] & 0xFFFF) - 32768


@dataclass
class _Ids:
    bs: int = 0
    nodes: int = 0
    tuples: int = 0
    recon: int = 0
    prev: int = 0
    intra: int = 0
    inter: int = 0

    @classmethod
    def of(cls, rec: TraceRecorder | None) -> "_Ids":
        if rec is None:
            return cls()
        return cls(*(rec.array_id(n) for n in
                     ("bitstream", "nodes", "tuples", "recon", "prev", "intra.cand",
                      "inter.cand")))


def _sort(keys: np.ndarray, tb, ts, arr: int) -> None:
    bitonic_sort_kernel(keys, tb, ts, OP_OSORT, arr, 8)


def parse_unit(unit: bytes | np.ndarray, n_chunk: int, blocks: int,
               rec: TraceRecorder | None = None, ids: _Ids | None = None) -> np.ndarray:
    """Sorted key array for one unit; the last ``blocks * 19`` keys are the slots."""
    data = np.frombuffer(bytes(unit), np.uint8) if not isinstance(unit, np.ndarray) else unit
    if len(data) % 2:
        raise DecodeError("unit length must be even")
    ids = ids or _Ids.of(rec)
    tb, ts = kernel_args(rec)
    p_u = blocks * SLOTS
    iters = (len(data) // 2) * n_chunk
    n = iters + p_u
    keys = np.full(next_pow2(n), PAD_KEY, np.int64)
    parse_kernel(data, n_chunk, PACKED, p_u, keys, tb, ts, ids.bs, ids.nodes, ids.tuples)
    fill_kernel(keys, iters, p_u, tb, ts, ids.tuples)
    _sort(keys, tb, ts, ids.tuples)
    dedup_kernel(keys, n, tb, ts, ids.tuples)
    _sort(keys, tb, ts, ids.tuples)
    return keys[:n]


def decode_row_bitstream(row: bytes | np.ndarray, n_chunk: int, blocks: int,
                         rec: TraceRecorder | None = None) -> list[CoeffTuple]:
    """Decode one padded row: dummies first, then one real tuple per slot in order."""
    return [unpack_key(k) for k in parse_unit(row, n_chunk, blocks, rec)]


def assign_coefficients(tuples, out: np.ndarray) -> None:
    """Fill ``out`` (flat) from the tail of a sorted tuple list."""
    p = out.size
    tail = tuples[len(tuples) - p:]
    flat = out.reshape(-1)
    for i, t in enumerate(tail):
        flat[i] = t[2] if isinstance(t, tuple) else unpack_key(t).value


@njit(cache=True)
def reconstruct_kernel(recon, prev, vals, by0, n_rows, q, inter, radius, zigzag,
                       tb, ts, recon_id, prev_id, intra_id, inter_id):
    """Rebuild block rows ``by0 .. by0 + n_rows - 1`` from their slot values."""
    bw = recon.shape[1] // 4
    w = recon.shape[1]
    levels = np.empty(16, np.int64)
    res = np.empty((4, 4), np.int64)
    pred = np.empty((4, 4), np.int64)
    cand = np.empty((N_MODES, 4, 4), np.int64)
    for rr in range(n_rows):
        by = by0 + rr
        for bx in range(bw):
            b = rr * bw + bx
            for k in range(16):
                levels[zigzag[k]] = vals[b, 3 + k]
            dequant_inverse_kernel(levels, q, res)
            if inter:
                inter_kernel(prev, by, bx, vals[b, 1], vals[b, 2], radius, pred,
                             tb, ts, prev_id, inter_id)
            else:
                intra_candidates(recon, by, bx, cand, tb, ts, recon_id)
                if ts[1]:
                    _nb.scan(tb, ts, OP_CAND, intra_id, 0, N_MODES, 4 * 4 * 8)
                select_rows(cand, vals[b, 0], pred, tb, ts, intra_id)
            for i in range(4):
                row = (by * 4 + i) * w + bx * 4
                if ts[1]:
                    _nb.scan(tb, ts, OP_RECON, recon_id, row, row + 4, 1)
                for j in range(4):
                    recon[by * 4 + i, bx * 4 + j] = _nb.imin(255, _nb.imax(0, pred[i, j] + res[i, j]))


def decode_stream(data: bytes, rec: TraceRecorder | None = None) -> list[np.ndarray]:
    """Decode every frame of an OVC container."""
    hdr = parse_header(data)
    need = container_size(hdr)
    if len(data) < need:
        missing = (len(data) - HEADER_BYTES) // hdr.unit_bytes
        raise DecodeError(
            f"container truncated: {len(data)} of {need} bytes, unit {missing} "
            f"(frame {missing // hdr.units_per_frame}, row {missing % hdr.units_per_frame}) incomplete",
            row=missing % hdr.units_per_frame)
    if len(data) > need:
        raise DecodeError(f"container has {len(data) - need} trailing bytes")
    return list(_decode(np.frombuffer(data, np.uint8), hdr, rec))


def _decode(buf: np.ndarray, hdr: Header, rec: TraceRecorder | None):
    ids = _Ids.of(rec)
    tb, ts = kernel_args(rec)
    ub = hdr.unit_bytes
    rows_per_unit = hdr.block_rows if hdr.frame_level else 1
    blocks = hdr.blocks_per_unit
    p_u = blocks * SLOTS
    prev = np.zeros((hdr.height, hdr.width), np.uint8)
    off = HEADER_BYTES
    for f in range(hdr.frames):
        recon = np.zeros((hdr.height, hdr.width), np.uint8)
        inter = (not hdr.keyframe_only) and f > 0
        for u in range(hdr.units_per_frame):
            keys = parse_unit(buf[off: off + ub], hdr.n_chunk, blocks, rec, ids)
            off += ub
            vals = np.empty(p_u, np.int64)
            assign_kernel(keys, len(keys), p_u, vals, tb, ts, ids.tuples)
            reconstruct_kernel(recon, prev, vals.reshape(blocks, SLOTS), u * rows_per_unit,
                               rows_per_unit, hdr.quant, inter, hdr.radius, ZIGZAG,
                               tb, ts, ids.recon, ids.prev, ids.intra, ids.inter)
        yield recon
        prev = recon
