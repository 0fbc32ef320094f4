"""Oblivious connected-component bounding boxes with a fixed-size label table.

Pass 1 scans the mask in raster order.  For each pixel the labels of the four
already-visited neighbours (left and the three above, so 8-connectivity) are
read at public positions; one read scan of the table fetches their
representatives, and one write scan relabels every entry whose representative
is among them and grows the target's box.  The table therefore always stores
fully resolved representatives: a plain parent overwrite can drop links when
two already-merged sets meet again, which this relabel avoids.

Pass 2 keeps the fixed parent-chasing double loop and the ``N x N`` box merge.
Unused or non-root slots come back as the sentinel box.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .. import _nb
from ..core import ContractViolation
from ..trace import TraceRecorder, kernel_args, op_id

BIG = np.iinfo(np.int32).max
SMALL = np.iinfo(np.int32).min
SENTINEL = (BIG, BIG, SMALL, SMALL)

OP_PIX = op_id("ccl.pixel")
OP_NLAB = op_id("ccl.neighbour")
OP_SETLAB = op_id("ccl.setlabel")
OP_TREAD = op_id("ccl.table.read")
OP_TWRITE = op_id("ccl.table.write")
OP_CHASE = op_id("ccl.chase")
OP_MERGE = op_id("ccl.merge")


@dataclass
class BoxResult:
    """``boxes[i] = (top, left, bottom, right)``; sentinel rows are empty slots."""
    boxes: np.ndarray
    overflow: bool

    def real(self) -> list[tuple[int, int, int, int]]:
        keep = self.boxes[:, 0] != BIG
        return [tuple(int(v) for v in b) for b in self.boxes[keep]]


@njit(cache=True, nogil=True)
def _union_step(rep, box, white, lab, r, nw, reps, y, x, tb, ts, rep_id, box_id):
    """Merge the sets of the white entries of ``r`` (``nw`` flags) plus, for a new
    pixel, the fresh label ``lab``; grow the resulting root's box by ``(y, x)``.

    Returns the root.  ``r`` holds label indices; reps are fetched here.
    """
    n = rep.shape[0]
    k4 = r.shape[0]
    for q in range(k4):
        reps[q] = 0
    lab_rep = np.int64(0)
    if ts[1]:
        _nb.scan(tb, ts, OP_TREAD, rep_id, 0, n, 8)
    for k in range(n):
        rk = rep[k]
        for q in range(k4):
            reps[q] = _nb.sel(k == r[q], rk, reps[q])
        lab_rep = _nb.sel(k == lab, rk, lab_rep)
    m = np.int64(BIG)
    anyn = np.int64(0)
    for q in range(k4):
        m = _nb.sel(nw[q] & (reps[q] < m), reps[q], m)
        anyn |= nw[q]
    is_new = white & (1 - anyn)
    target = _nb.sel(is_new, lab_rep, m)
    if ts[1]:
        _nb.scan(tb, ts, OP_TWRITE, rep_id, 0, n, 8)
        _nb.scan(tb, ts, OP_TWRITE, box_id, 0, n, 32)
    for k in range(n):
        rk = rep[k]
        hit = np.int64(0)
        for q in range(k4):
            hit |= nw[q] & (rk == reps[q])
        rep[k] = _nb.sel(white & hit, target, rk)
        grow = white & (k == target)
        box[k, 0] = _nb.sel(grow & (y < box[k, 0]), y, box[k, 0])
        box[k, 1] = _nb.sel(grow & (x < box[k, 1]), x, box[k, 1])
        box[k, 2] = _nb.sel(grow & (y > box[k, 2]), y, box[k, 2])
        box[k, 3] = _nb.sel(grow & (x > box[k, 3]), x, box[k, 3])
    return target, is_new


@njit(cache=True, nogil=True)
def label_pass(mask, labels, rep, box, row0, tb, ts, ids):
    """Pass 1 over ``mask``; returns the overflow flag.  ``row0`` offsets box rows."""
    h, w = mask.shape
    n = rep.shape[0]
    ctr = np.int64(0)
    over = np.int64(0)
    r = np.empty(4, np.int64)
    nw = np.empty(4, np.int64)
    reps = np.empty(4, np.int64)
    for y in range(h):
        for x in range(w):
            if ts[1]:
                _nb.touch(tb, ts, OP_PIX, ids[0], y * w + x, 1)
            white = np.int64(mask[y, x] != 0)
            # neighbours: left, up-left, up, up-right (public positions)
            q = 0
            for dy, dx in ((0, -1), (-1, -1), (-1, 0), (-1, 1)):
                yy = y + dy
                xx = x + dx
                if yy >= 0 and 0 <= xx < w:
                    if ts[1]:
                        _nb.touch(tb, ts, OP_NLAB, ids[1], yy * w + xx, 4)
                    lv = np.int64(labels[yy, xx])
                else:
                    lv = np.int64(-1)
                nw[q] = np.int64(lv >= 0)
                r[q] = lv
                q += 1
            lab = _nb.imin(ctr, n - 1)
            target, is_new = _union_step(rep, box, white, lab, r, nw, reps, y + row0, x,
                                         tb, ts, ids[2], ids[3])
            over |= is_new & np.int64(ctr >= n)
            ctr += is_new
            if ts[1]:
                _nb.touch(tb, ts, OP_SETLAB, ids[1], y * w + x, 4)
            labels[y, x] = _nb.sel(white, target, -1)
    return over


@njit(cache=True, nogil=True)
def merge_pass(rep, box, tb, ts, ids):
    """Fixed parent chasing, then the N x N box merge; non-roots become sentinels."""
    n = rep.shape[0]
    for i in range(n):
        if ts[1]:
            _nb.touch(tb, ts, OP_CHASE, ids[2], i, 8)
        par = rep[i]
        to_merge = par < i
        for j in range(i, -1, -1):
            if ts[1]:
                _nb.touch(tb, ts, OP_CHASE, ids[2], j, 8)
            rep[i] = _nb.sel(to_merge & (par == j), rep[j], rep[i])
    for i in range(n):
        if ts[1]:
            _nb.scan(tb, ts, OP_MERGE, ids[3], 0, n, 32)
        for j in range(n):
            mg = np.int64(rep[j] == i)
            box[i, 0] = _nb.sel(mg & (box[j, 0] < box[i, 0]), box[j, 0], box[i, 0])
            box[i, 1] = _nb.sel(mg & (box[j, 1] < box[i, 1]), box[j, 1], box[i, 1])
            box[i, 2] = _nb.sel(mg & (box[j, 2] > box[i, 2]), box[j, 2], box[i, 2])
            box[i, 3] = _nb.sel(mg & (box[j, 3] > box[i, 3]), box[j, 3], box[i, 3])
    for i in range(n):
        root = np.int64(rep[i] == i)
        box[i, 0] = _nb.sel(root, box[i, 0], BIG)
        box[i, 1] = _nb.sel(root, box[i, 1], BIG)
        box[i, 2] = _nb.sel(root, box[i, 2], SMALL)
        box[i, 3] = _nb.sel(root, box[i, 3], SMALL)


def _fresh_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    rep = np.arange(n, dtype=np.int64)
    box = np.empty((n, 4), np.int64)
    box[:] = SENTINEL
    return rep, box


def _ids(rec: TraceRecorder | None, prefix: str = "") -> np.ndarray:
    names = ("mask", "labels", "table.rep", "table.box")
    return np.array([rec.array_id(prefix + n) if rec else 0 for n in names], np.int64)


def _check_mask(mask) -> np.ndarray:
    mask = np.ascontiguousarray(mask)
    if mask.ndim != 2:
        raise ContractViolation("mask must be 2-D")
    return mask


def detect_bboxes(mask: np.ndarray, n: int, rec: TraceRecorder | None = None) -> BoxResult:
    """Bounding boxes of the 8-connected white blobs of ``mask`` in an ``n``-slot table."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    mask = _check_mask(mask)
    rep, box = _fresh_table(n)
    labels = np.empty(mask.shape, np.int32)
    tb, ts = kernel_args(rec)
    ids = _ids(rec)
    over = label_pass(mask, labels, rep, box, 0, tb, ts, ids)
    merge_pass(rep, box, tb, ts, ids)
    return BoxResult(box, bool(over))


@njit(cache=True, nogil=True)
def boundary_pass(labels, row, rep, box, tb, ts, ids):
    """Union each white pixel of ``row`` with its white neighbours in ``row - 1``."""
    w = labels.shape[1]
    r = np.empty(4, np.int64)
    nw = np.empty(4, np.int64)
    reps = np.empty(4, np.int64)
    for x in range(w):
        if ts[1]:
            _nb.touch(tb, ts, OP_NLAB, ids[1], row * w + x, 4)
        me = np.int64(labels[row, x])
        white = np.int64(me >= 0)
        r[0] = me
        nw[0] = white
        q = 1
        for dx in (-1, 0, 1):
            xx = x + dx
            if 0 <= xx < w:
                if ts[1]:
                    _nb.touch(tb, ts, OP_NLAB, ids[1], (row - 1) * w + xx, 4)
                lv = np.int64(labels[row - 1, xx])
            else:
                lv = np.int64(-1)
            r[q] = lv
            nw[q] = white & np.int64(lv >= 0)
            q += 1
        # growing the root by a pixel it already covers is harmless
        _union_step(rep, box, white, np.int64(0), r, nw, reps, np.int64(row), np.int64(x),
                    tb, ts, ids[2], ids[3])


def detect_bboxes_striped(mask: np.ndarray, n_per_stripe: int, stripes: int,
                          rec: TraceRecorder | None = None, workers: int = 1) -> BoxResult:
    """Per-stripe labelling, then a boundary merge and a global box merge.

    The mask is zero-padded at the bottom to a multiple of ``stripes`` rows.
    With ``workers > 1`` stripes run on a thread pool; their traces are
    recorded separately and appended in stripe order.
    """
    if stripes < 1 or n_per_stripe < 1:
        raise ContractViolation("stripes and n_per_stripe must be >= 1")
    mask = _check_mask(mask)
    h, w = mask.shape
    hs = -(-h // stripes)
    if hs * stripes != h:
        mask = np.vstack([mask, np.zeros((hs * stripes - h, w), mask.dtype)])
    labels = np.empty(mask.shape, np.int32)
    ng = n_per_stripe * stripes
    rep = np.empty(ng, np.int64)
    box = np.empty((ng, 4), np.int64)
    overs = [False] * stripes

    def stripe(s: int, srec: TraceRecorder | None):
        rs, bs = _fresh_table(n_per_stripe)
        lab = np.empty((hs, w), np.int32)
        tb, ts = kernel_args(srec)
        ids = _ids(srec, f"s{s}.")
        overs[s] = bool(label_pass(mask[s * hs:(s + 1) * hs], lab, rs, bs, s * hs, tb, ts, ids))
        merge_pass(rs, bs, tb, ts, ids)
        # stripe-local labels -> global slots (elementwise, no lookups)
        off = s * n_per_stripe
        labels[s * hs:(s + 1) * hs] = np.where(lab >= 0, lab + off, -1)
        rep[off: off + n_per_stripe] = rs + off
        box[off: off + n_per_stripe] = bs

    if workers > 1 and stripes > 1:
        subs = [TraceRecorder(rec.cache_line_bytes, keep_events=True) if rec else None
                for _ in range(stripes)]
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(stripe, range(stripes), subs))
        if rec is not None:
            for sub in subs:
                rec.absorb(sub)
    else:
        for s in range(stripes):
            stripe(s, rec)
    tb, ts = kernel_args(rec)
    ids = _ids(rec, "global.")
    for s in range(1, stripes):
        boundary_pass(labels, s * hs, rep, box, tb, ts, ids)
    merge_pass(rep, box, tb, ts, ids)
    return BoxResult(box, any(overs))


# -- references -----------------------------------------------------------------

def reference_boxes(mask: np.ndarray) -> list[tuple[int, int, int, int]]:
    """8-connected component boxes by flood fill (scipy), sorted."""
    from scipy import ndimage
    lab, _ = ndimage.label(np.asarray(mask) != 0, structure=np.ones((3, 3), int))
    out = []
    for sl in ndimage.find_objects(lab):
        if sl is not None:
            out.append((sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1))
    return sorted(out)


def naive_detect_bboxes(mask: np.ndarray, n: int) -> BoxResult:
    """Same algorithm with every neighbour-label read done as a whole-image scan."""
    mask = _check_mask(mask)
    rep, box = _fresh_table(n)
    labels = np.empty(mask.shape, np.int32)
    over = _naive_pass(mask, labels, rep, box)
    tb, ts = kernel_args(None)
    merge_pass(rep, box, tb, ts, _ids(None))
    return BoxResult(box, bool(over))


@njit(cache=True)
def _naive_pass(mask, labels, rep, box):
    h, w = mask.shape
    n = rep.shape[0]
    tb = np.zeros((1, 4), np.int64)
    ts = np.array([0, 0, 6, 0], np.int64)
    flat = labels.reshape(-1)
    flat[:] = -1
    ctr = np.int64(0)
    over = np.int64(0)
    r = np.empty(4, np.int64)
    nw = np.empty(4, np.int64)
    reps = np.empty(4, np.int64)
    for y in range(h):
        for x in range(w):
            white = np.int64(mask[y, x] != 0)
            q = 0
            for dy, dx in ((0, -1), (-1, -1), (-1, 0), (-1, 1)):
                yy = y + dy
                xx = x + dx
                inside = np.int64((yy >= 0) & (xx >= 0) & (xx < w))
                want = yy * w + xx
                lv = np.int64(-1)
                for k in range(flat.shape[0]):
                    lv = _nb.sel(inside & (k == want), flat[k], lv)
                nw[q] = np.int64(lv >= 0)
                r[q] = lv
                q += 1
            lab = _nb.imin(ctr, n - 1)
            target, is_new = _union_step(rep, box, white, lab, r, nw, reps, y, x, tb, ts, 0, 0)
            over |= is_new & np.int64(ctr >= n)
            ctr += is_new
            want = y * w + x
            for k in range(flat.shape[0]):
                flat[k] = _nb.sel(k == want, _nb.sel(white, target, -1), flat[k])
    return over
