"""Oblivious object cropping and resizing.

Cropping slides a ``Q x W`` strip down the frame and then a ``Q x P`` window
across the strip, copying under a mask at every position, so the trace only
depends on the frame size and ``(P, Q)``.  Resizing runs a horizontal
bilinear pass, a transpose, a second horizontal pass and a transpose back;
each output sample fetches its two source samples with full-row scans.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .. import _nb
from ..core import ContractViolation
from ..trace import TraceRecorder, kernel_args, op_id

OP_STRIP = op_id("crop.strip")
OP_WINDOW = op_id("crop.window")
OP_RS_READ = op_id("resize.read")
OP_RS_WRITE = op_id("resize.write")
OP_TRANSPOSE = op_id("resize.transpose")

FRAC = 16
ONE = 1 << FRAC
EXTRA = 8           # extra fractional bits kept between the two passes


@dataclass
class ObjectImage:
    """``pixels`` is ``Q x P``; ``roi`` is (top, left, bottom, right) inside it."""
    pixels: np.ndarray
    roi: tuple[int, int, int, int]


def _int_view(a: np.ndarray) -> np.ndarray:
    if a.dtype.kind == "f":
        return a.view(np.dtype(f"i{a.dtype.itemsize}"))
    if a.dtype == np.bool_:
        return a.view(np.uint8)
    return a


@njit(cache=True)
def _fill(buf, v):
    for k in range(buf.shape[0]):
        buf[k] = v


@njit(cache=True)
def crop_kernel(frame, top, left, p, q, tb, ts, f_id, s_id, o_id):
    h, w = frame.shape
    isz = frame.itemsize
    strip = np.zeros((q, w), frame.dtype)
    zero = frame.dtype.type(0)
    # The mask is re-read per element from memory: a loop-invariant mask lets
    # the compiler unswitch the loop into a branch on the secret condition.
    mrow = np.zeros(w, frame.dtype)
    for i in range(h - q + 1):
        if ts[1]:
            _nb.scan(tb, ts, OP_STRIP, f_id, i * w, (i + q) * w, isz)
            _nb.scan(tb, ts, OP_STRIP, s_id, 0, q * w, isz)
        _fill(mrow, zero - frame.dtype.type(i == top))
        for r in range(q):
            for c in range(w):
                m = mrow[c]
                strip[r, c] = (frame[i + r, c] & m) | (strip[r, c] & ~m)
    obj = np.zeros((q, p), frame.dtype)
    for j in range(w - p + 1):
        if ts[1]:
            for r in range(q):
                _nb.scan(tb, ts, OP_WINDOW, s_id, r * w + j, r * w + j + p, isz)
            _nb.scan(tb, ts, OP_WINDOW, o_id, 0, q * p, isz)
        _fill(mrow, zero - frame.dtype.type(j == left))
        for r in range(q):
            for c in range(p):
                m = mrow[c]
                obj[r, c] = (strip[r, j + c] & m) | (obj[r, c] & ~m)
    return obj


def crop_object(frame: np.ndarray, bbox: tuple[int, int, int, int], p: int, q: int,
                rec: TraceRecorder | None = None) -> ObjectImage:
    """Copy the ``q x p`` window holding ``bbox`` (top, left, bottom, right).

    The window is anchored at the box's top-left corner, pulled back so it
    stays inside the frame; the rest of the window is frame content.
    """
    frame = np.ascontiguousarray(frame)
    h, w = frame.shape
    if not (1 <= p <= w and 1 <= q <= h):
        raise ContractViolation(f"object bound {p}x{q} exceeds frame {w}x{h}")
    t, l, b, r = (int(v) for v in bbox)
    if not (0 <= t <= b < h and 0 <= l <= r < w):
        raise ContractViolation(f"bbox {bbox} is not inside the {w}x{h} frame")
    if b - t + 1 > q or r - l + 1 > p:
        raise ContractViolation(f"bbox {bbox} exceeds object bound {p}x{q}")
    # clamp arithmetic on public bounds, no branches
    top = t - max(0, t + q - h)
    left = l - max(0, l + p - w)
    tb, ts = kernel_args(rec)
    ids = [rec.array_id(n) if rec is not None else 0 for n in ("frame", "crop.strip", "crop.obj")]
    obj = crop_kernel(_int_view(frame), top, left, p, q, tb, ts, *ids).view(frame.dtype)
    return ObjectImage(obj, (t - top, l - left, b - top, r - left))


@njit(cache=True)
def naive_crop_kernel(frame, top, left, p, q):
    """Blend the object buffer at every possible window position."""
    h, w = frame.shape
    obj = np.zeros((q, p), frame.dtype)
    mrow = np.zeros(p, frame.dtype)
    for i in range(h - q + 1):
        for j in range(w - p + 1):
            _fill(mrow, frame.dtype.type(0) - frame.dtype.type((i == top) & (j == left)))
            for r in range(q):
                for c in range(p):
                    m = mrow[c]
                    obj[r, c] = (frame[i + r, j + c] & m) | (obj[r, c] & ~m)
    return obj


def naive_crop(frame: np.ndarray, bbox, p: int, q: int) -> np.ndarray:
    h, w = frame.shape
    t, l = int(bbox[0]), int(bbox[1])
    return naive_crop_kernel(np.ascontiguousarray(frame), t - max(0, t + q - h),
                             l - max(0, l + p - w), p, q)


# -- resize -----------------------------------------------------------------------

@njit(cache=True, inline="always")
def _src(j, n_out, lo, hi):
    """16.16 source coordinate of output sample ``j`` mapped into ``[lo, hi]``."""
    span = hi - lo + 1
    s = ((2 * j + 1) * span * ONE) // (2 * n_out) - ONE // 2 + lo * ONE
    return _nb.imin(_nb.imax(s, lo * ONE), hi * ONE)


@njit(cache=True)
def _hpass(src, dst, lo, hi, shift, tb, ts, src_id, dst_id):
    """dst[i, j] = lerp along rows of ``src`` over columns ``lo..hi``, then ``>> shift``."""
    rows, n_in = src.shape
    n_out = dst.shape[1]
    for i in range(rows):
        for j in range(n_out):
            s = _src(j, n_out, lo, hi)
            p0 = s >> FRAC
            f = s & (ONE - 1)
            p1 = _nb.imin(p0 + 1, hi)
            if ts[1]:
                _nb.scan(tb, ts, OP_RS_READ, src_id, i * n_in, (i + 1) * n_in, 8)
                _nb.scan(tb, ts, OP_RS_READ, src_id, i * n_in, (i + 1) * n_in, 8)
            a = np.int64(0)
            b = np.int64(0)
            for k in range(n_in):
                v = src[i, k]
                a = _nb.sel(k == p0, v, a)
                b = _nb.sel(k == p1, v, b)
            if ts[1]:
                _nb.touch(tb, ts, OP_RS_WRITE, dst_id, i * n_out + j, 8)
            dst[i, j] = (a * ONE + (b - a) * f) >> shift


@njit(cache=True)
def _transpose(src, dst, tb, ts, src_id, dst_id):
    if ts[1]:
        _nb.scan(tb, ts, OP_TRANSPOSE, src_id, 0, src.size, 8)
        _nb.scan(tb, ts, OP_TRANSPOSE, dst_id, 0, dst.size, 8)
    for i in range(src.shape[0]):
        for j in range(src.shape[1]):
            dst[j, i] = src[i, j]


@njit(cache=True)
def resize_kernel(obj, t, l, b, r, oh, ow, tb, ts, ids):
    q, p = obj.shape
    # clamp roi into the buffer and to at least 1x1
    l = _nb.imin(_nb.imax(l, 0), p - 1)
    r = _nb.imin(_nb.imax(r, l), p - 1)
    t = _nb.imin(_nb.imax(t, 0), q - 1)
    b = _nb.imin(_nb.imax(b, t), q - 1)
    src = obj.astype(np.int64)
    h1 = np.empty((q, ow), np.int64)
    _hpass(src, h1, l, r, FRAC - EXTRA, tb, ts, ids[0], ids[1])
    t1 = np.empty((ow, q), np.int64)
    _transpose(h1, t1, tb, ts, ids[1], ids[2])
    h2 = np.empty((ow, oh), np.int64)
    _hpass(t1, h2, t, b, 0, tb, ts, ids[2], ids[3])
    out = np.empty((oh, ow), np.int64)
    _transpose(h2, out, tb, ts, ids[3], ids[4])
    half = np.int64(1) << (FRAC + EXTRA - 1)
    res = np.empty((oh, ow), np.uint8)
    for i in range(oh):
        for j in range(ow):
            res[i, j] = _nb.imin(255, _nb.imax(0, (out[i, j] + half) >> (FRAC + EXTRA)))
    return res


def resize_object(obj: ObjectImage | np.ndarray, roi: tuple[int, int, int, int] | None = None,
                  rec: TraceRecorder | None = None,
                  out_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Scale ``roi`` (top, left, bottom, right, inclusive) to fill the buffer.

    The output has the buffer's shape unless ``out_shape`` (rows, cols) is given.
    """
    if isinstance(obj, ObjectImage):
        roi = obj.roi if roi is None else roi
        obj = obj.pixels
    if roi is None:
        raise ValueError("roi required")
    obj = np.ascontiguousarray(obj, np.uint8)
    tb, ts = kernel_args(rec)
    names = ("resize.src", "resize.h1", "resize.t1", "resize.h2", "resize.out")
    ids = np.array([rec.array_id(n) if rec is not None else 0 for n in names], np.int64)
    t, l, b, r = (int(v) for v in roi)
    oh, ow = obj.shape if out_shape is None else (int(out_shape[0]), int(out_shape[1]))
    if oh < 1 or ow < 1:
        raise ContractViolation("output shape must be at least 1x1")
    return resize_kernel(obj, t, l, b, r, oh, ow, tb, ts, ids)


def reference_resize(obj: np.ndarray, roi, out_shape=None) -> np.ndarray:
    """Float bilinear with the same half-pixel mapping and edge clamping."""
    obj = np.asarray(obj, np.float64)
    sq, sp = obj.shape
    q, p = obj.shape if out_shape is None else out_shape
    t, l, b, r = roi
    l = min(max(l, 0), sp - 1)
    t = min(max(t, 0), sq - 1)
    r = min(max(r, l), sp - 1)
    b = min(max(b, t), sq - 1)

    def coords(n_out, lo, hi):
        s = (np.arange(n_out) + 0.5) * (hi - lo + 1) / n_out - 0.5 + lo
        s = np.clip(s, lo, hi)
        p0 = np.floor(s).astype(int)
        return p0, np.minimum(p0 + 1, hi), s - p0

    x0, x1, fx = coords(p, l, r)
    y0, y1, fy = coords(q, t, b)
    rows = obj[:, x0] * (1 - fx) + obj[:, x1] * fx
    return rows[y0] * (1 - fy)[:, None] + rows[y1] * fy[:, None]
