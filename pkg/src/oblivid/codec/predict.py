"""Oblivious intra and inter block prediction.

Intra: all four mode predictions are computed from the public context pixels,
then each pixel row of the block is picked with a scan over the four candidate
rows.  Inter: every block inside the ``(2R+1)**2`` search window (clamped to
the frame, which is public geometry) is gathered, and the one named by the
motion vector is picked with a scan over the gathered candidates.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .. import _nb
from ..trace import TraceRecorder, kernel_args, op_id

EDGE_FILL = 127
DC, V, H, TM = 0, 1, 2, 3
N_MODES = 4

OP_CTX = op_id("codec.ctx")
OP_CAND = op_id("codec.cand.write")
OP_SELECT = op_id("codec.cand.select")
OP_REF = op_id("codec.ref")


@njit(cache=True)
def intra_candidates(recon, by, bx, cand, tb, ts, recon_id):
    """Fill ``cand[mode, i, j]`` for the block at block coords ``(by, bx)``."""
    w = recon.shape[1]
    y0 = by * 4
    x0 = bx * 4
    top = np.full(4, EDGE_FILL, np.int64)
    left = np.full(4, EDGE_FILL, np.int64)
    corner = np.int64(EDGE_FILL)
    if by > 0:
        if ts[1]:
            _nb.scan(tb, ts, OP_CTX, recon_id, (y0 - 1) * w + x0, (y0 - 1) * w + x0 + 4, 1)
        for j in range(4):
            top[j] = recon[y0 - 1, x0 + j]
    if bx > 0:
        for i in range(4):
            if ts[1]:
                _nb.touch(tb, ts, OP_CTX, recon_id, (y0 + i) * w + x0 - 1, 1)
            left[i] = recon[y0 + i, x0 - 1]
    if by > 0 and bx > 0:
        if ts[1]:
            _nb.touch(tb, ts, OP_CTX, recon_id, (y0 - 1) * w + x0 - 1, 1)
        corner = recon[y0 - 1, x0 - 1]
    dc = (top.sum() + left.sum() + 4) >> 3
    for i in range(4):
        for j in range(4):
            cand[DC, i, j] = dc
            cand[V, i, j] = top[j]
            cand[H, i, j] = left[i]
            cand[TM, i, j] = _nb.imin(255, _nb.imax(0, left[i] + top[j] - corner))


@njit(cache=True)
def select_rows(cand, mode, out, tb, ts, cand_id):
    """``out[i] = cand[mode, i]`` with one full candidate scan per pixel row."""
    n = cand.shape[0]
    for i in range(4):
        if ts[1]:
            _nb.scan(tb, ts, OP_SELECT, cand_id, 0, n, 4 * 8)
        for j in range(4):
            v = np.int64(0)
            for m in range(n):
                v = _nb.sel(m == mode, cand[m, i, j], v)
            out[i, j] = v


@njit(cache=True)
def intra_kernel(recon, by, bx, mode, out, tb, ts, recon_id, cand_id):
    cand = np.empty((N_MODES, 4, 4), np.int64)
    intra_candidates(recon, by, bx, cand, tb, ts, recon_id)
    if ts[1]:
        _nb.scan(tb, ts, OP_CAND, cand_id, 0, N_MODES, 4 * 4 * 8)
    select_rows(cand, mode, out, tb, ts, cand_id)


@njit(cache=True)
def inter_kernel(prev, by, bx, mvy, mvx, radius, out, tb, ts, prev_id, cand_id):
    """Fetch the block displaced by ``(mvy, mvx)`` blocks, or the co-located one."""
    h = prev.shape[0] // 4
    w = prev.shape[1] // 4
    span = 2 * radius + 1
    n = span * span
    cand = np.empty((n, 4, 4), np.int64)
    k = 0
    for dy in range(-radius, radius + 1):
        ry = min(max(by + dy, 0), h - 1)
        for dx in range(-radius, radius + 1):
            rx = min(max(bx + dx, 0), w - 1)
            for i in range(4):
                row = (ry * 4 + i) * prev.shape[1] + rx * 4
                if ts[1]:
                    _nb.scan(tb, ts, OP_REF, prev_id, row, row + 4, 1)
                for j in range(4):
                    cand[k, i, j] = prev[ry * 4 + i, rx * 4 + j]
            k += 1
    if ts[1]:
        _nb.scan(tb, ts, OP_CAND, cand_id, 0, n, 16 * 8)
    inside = (mvy >= -radius) & (mvy <= radius) & (mvx >= -radius) & (mvx <= radius)
    centre = radius * span + radius
    idx = _nb.sel(inside, (mvy + radius) * span + (mvx + radius), centre)
    if ts[1]:
        _nb.scan(tb, ts, OP_SELECT, cand_id, 0, n, 16 * 8)
    for i in range(4):
        for j in range(4):
            v = np.int64(0)
            for m in range(n):
                v = _nb.sel(m == idx, cand[m, i, j], v)
            out[i, j] = v


def _ids(rec: TraceRecorder | None, *names: str) -> list[int]:
    return [rec.array_id(n) if rec is not None else 0 for n in names]


def intra_predict(block_pos: tuple[int, int], recon: np.ndarray, mode: int,
                  rec: TraceRecorder | None = None) -> np.ndarray:
    """Predict the 4x4 block at block coordinates ``block_pos`` in intra mode ``mode``."""
    tb, ts = kernel_args(rec)
    out = np.empty((4, 4), np.int64)
    rid, cid = _ids(rec, "recon", "intra.cand")
    intra_kernel(np.ascontiguousarray(recon, np.uint8), block_pos[0], block_pos[1],
                 int(mode), out, tb, ts, rid, cid)
    return out


def inter_predict(block_pos: tuple[int, int], prev: np.ndarray, mv: tuple[int, int],
                  radius: int, rec: TraceRecorder | None = None) -> np.ndarray:
    """Reference block at ``block_pos + mv`` (block units, ``mv = (dy, dx)``).

    Vectors outside the radius fall back to the co-located block.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    tb, ts = kernel_args(rec)
    out = np.empty((4, 4), np.int64)
    pid, cid = _ids(rec, "prev", "inter.cand")
    inter_kernel(np.ascontiguousarray(prev, np.uint8), block_pos[0], block_pos[1],
                 int(mv[0]), int(mv[1]), int(radius), out, tb, ts, pid, cid)
    return out
