"""Oblivious primitives: conditional assignment, bitonic sort, linear-scan access.

Every memory touch a primitive makes on a caller buffer is reported to an
optional :class:`~oblivid.trace.TraceRecorder`.  Selection never branches on
the payload: scalars are blended through integer masks, arrays through
vectorized mask-and-blend.
"""
from __future__ import annotations

import struct
from typing import Any, Callable, MutableSequence, Sequence

import numpy as np
from numba import njit

from . import _nb
from .trace import TraceRecorder, kernel_args, op_id

OP_OSORT = op_id("osort.cx")
OP_OACCESS = op_id("oaccess")
OP_OWRITE = op_id("owrite")

_F64 = struct.Struct("<d")
_I64 = struct.Struct("<q")


class ContractViolation(ValueError):
    """A public precondition of an oblivious operation was not met."""


def _f2bits(x: float) -> int:
    return _I64.unpack(_F64.pack(x))[0]


def _bits2f(b: int) -> float:
    return _F64.unpack(_I64.pack(b))[0]


def oassign(cond: bool, a, b):
    """Return ``a`` if ``cond`` else ``b`` by mask-and-blend.

    Integers blend directly; floats blend on their 64-bit patterns, so NaN and
    infinities pass through untouched.
    """
    m = -int(bool(cond))
    if isinstance(a, float) or isinstance(b, float):
        return _bits2f((_f2bits(float(a)) & m) | (_f2bits(float(b)) & ~m))
    return (int(a) & m) | (int(b) & ~m)


def _as_bits(x: np.ndarray) -> np.ndarray:
    if x.dtype.kind == "f":
        return x.view(np.dtype(f"i{x.dtype.itemsize}"))
    if x.dtype.kind == "b":
        return x.view(np.uint8)
    return x


def oassign_vec(cond_mask, a, b) -> np.ndarray:
    """Per-lane :func:`oassign`; lane count is public and must match."""
    cond_mask = np.asarray(cond_mask, bool)
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or cond_mask.shape != a.shape[: cond_mask.ndim]:
        raise ContractViolation(
            f"lane mismatch: mask {cond_mask.shape}, a {a.shape}, b {b.shape}")
    dt = np.result_type(a, b)
    a = np.ascontiguousarray(a, dt)
    b = np.ascontiguousarray(b, dt)
    ab, bb = _as_bits(a), _as_bits(b)
    m = -cond_mask.astype(ab.dtype)
    m = m.reshape(m.shape + (1,) * (a.ndim - m.ndim))
    return ((ab & m) | (bb & ~m)).view(dt)


# -- sort --------------------------------------------------------------------

def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def bitonic_cx_count(n: int) -> int:
    """Compare-exchanges executed for ``n`` items (after padding)."""
    p = next_pow2(n)
    k = p.bit_length() - 1
    return (p // 2) * k * (k + 1) // 2


def bitonic_schedule(n: int):
    """Yield ``(i, l, ascending)`` comparators of the network for padded length ``n``."""
    k = 2
    while k <= n:
        j = k // 2
        while j > 0:
            for i in range(n):
                l = i ^ j
                if l > i:
                    yield i, l, (i & k) == 0
            j //= 2
        k *= 2


def orderable(key: Any):
    """Map keys to plain integers/tuples so comparisons never see a float.

    Float bit patterns are transcoded so integer order equals float order
    (negative floats have their magnitude bits flipped).
    """
    if isinstance(key, tuple):
        return tuple(orderable(k) for k in key)
    if isinstance(key, (float, np.floating)):
        b = _f2bits(float(key))
        return b ^ ((b >> 63) & 0x7FFFFFFFFFFFFFFF)
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, np.integer):
        return int(key)
    return key


def osort(buf: MutableSequence, key_fn: Callable[[Any], Any] = lambda r: r,
          rec: TraceRecorder | None = None, name: str = "osort",
          itemsize: int = 1) -> int:
    """Sort ``buf`` ascending by ``key_fn`` in place with a bitonic network.

    The input is padded to the next power of two with pad records that sort
    after every real one; they are stripped afterwards.  Returns the number of
    compare-exchanges executed, which depends only on ``len(buf)``.
    """
    n = len(buf)
    if n < 1:
        raise ContractViolation("osort needs at least one record")
    p = next_pow2(n)
    work = [((0, orderable(key_fn(r))), r) for r in buf]
    work += [((1, i), None) for i in range(p - n)]
    on = rec is not None and rec.enabled
    count = 0
    for i, l, up in bitonic_schedule(p):
        if on:
            rec.touch(OP_OSORT, name, i, itemsize)
            rec.touch(OP_OSORT, name, l, itemsize)
        x, y = work[i], work[l]
        swap = (x[0] > y[0]) == up
        pair = (x, y)
        s = int(swap)
        work[i], work[l] = pair[s], pair[1 - s]
        count += 1
    buf[:] = [r for _, r in work[:n]]
    return count


@njit(cache=True)
def bitonic_sort_kernel(a, tb, ts, op, arr, itemsize):
    """In-place ascending bitonic sort of a power-of-two length int64 array."""
    n = a.shape[0]
    k = 2
    count = 0
    while k <= n:
        j = k // 2
        while j > 0:
            for i in range(n):
                l = i ^ j
                if l > i:
                    if ts[1]:
                        _nb.touch(tb, ts, op, arr, i, itemsize)
                        _nb.touch(tb, ts, op, arr, l, itemsize)
                    x = a[i]
                    y = a[l]
                    up = (i & k) == 0
                    sw = (x > y) == up
                    a[i] = _nb.sel(sw, y, x)
                    a[l] = _nb.sel(sw, x, y)
                    count += 1
            j //= 2
        k *= 2
    return count


@njit(cache=True)
def sort_rows_kernel(keys, rows, tb, ts, op, arr, itemsize):
    """Bitonic sort by ``keys`` (power-of-two length) carrying int64 ``rows`` along."""
    n = keys.shape[0]
    nf = rows.shape[1]
    k = 2
    while k <= n:
        j = k // 2
        while j > 0:
            for i in range(n):
                l = i ^ j
                if l > i:
                    if ts[1]:
                        _nb.touch(tb, ts, op, arr, i, itemsize)
                        _nb.touch(tb, ts, op, arr, l, itemsize)
                    a = keys[i]
                    b = keys[l]
                    sw = (a > b) == ((i & k) == 0)
                    keys[i] = _nb.sel(sw, b, a)
                    keys[l] = _nb.sel(sw, a, b)
                    for f in range(nf):
                        x = rows[i, f]
                        y = rows[l, f]
                        rows[i, f] = _nb.sel(sw, y, x)
                        rows[l, f] = _nb.sel(sw, x, y)
            j //= 2
        k *= 2


PAD_KEY = np.iinfo(np.int64).max


def osort_keys(keys: np.ndarray, rec: TraceRecorder | None = None,
               name: str = "osort", itemsize: int = 8) -> np.ndarray:
    """Oblivious ascending sort of an int64 key array; returns a sorted copy.

    Keys must be below ``PAD_KEY``; float arrays go through :func:`float_keys`.
    """
    keys = np.asarray(keys)
    if keys.dtype.kind == "f":
        keys = float_keys(keys)
    n = len(keys)
    if n < 1:
        raise ContractViolation("osort needs at least one record")
    work = np.full(next_pow2(n), PAD_KEY, np.int64)
    work[:n] = keys
    tb, ts = kernel_args(rec)
    arr = rec.array_id(name) if rec is not None else 0
    bitonic_sort_kernel(work, tb, ts, OP_OSORT, arr, itemsize)
    return work[:n]


def float_keys(x: np.ndarray) -> np.ndarray:
    """Order-preserving int64 transcoding of float64 values."""
    b = np.ascontiguousarray(x, np.float64).view(np.int64)
    return b ^ ((b >> 63) & np.int64(0x7FFFFFFFFFFFFFFF))


# -- array access ------------------------------------------------------------

def _record_bytes(buf: np.ndarray) -> int:
    return buf.itemsize * int(np.prod(buf.shape[1:], dtype=np.int64))


def oaccess(buf, i: int, rec: TraceRecorder | None = None, name: str = "oaccess"):
    """Return ``buf[i]`` after scanning every line of ``buf`` in order.

    ``i`` out of range is detected without branching on it during the scan;
    the error is raised only after the full pass.
    """
    if isinstance(buf, np.ndarray):
        n = buf.shape[0]
        if rec is not None:
            rec.scan(OP_OACCESS, name, 0, n, _record_bytes(buf))
        hit = np.arange(n) == i
        bits = _as_bits(np.ascontiguousarray(buf))
        m = -hit.astype(bits.dtype).reshape((n,) + (1,) * (buf.ndim - 1))
        out = np.bitwise_or.reduce(bits & m, axis=0).view(buf.dtype)
        ok = bool(hit.any())
        if not ok:
            raise ContractViolation(f"oaccess index out of range for length {n}")
        return out[()] if out.ndim == 0 else out
    n = len(buf)
    if rec is not None:
        rec.scan(OP_OACCESS, name, 0, n, 1)
    found = None
    ok = 0
    for k in range(n):
        hit = int(k == i)
        pair = (found, buf[k])
        found = pair[hit]
        ok |= hit
    if not ok:
        raise ContractViolation(f"oaccess index out of range for length {n}")
    return found


def owrite(buf, i: int, v, rec: TraceRecorder | None = None, name: str = "owrite") -> None:
    """Set ``buf[i] = v`` touching every line of ``buf``; others keep their value."""
    if isinstance(buf, np.ndarray):
        n = buf.shape[0]
        if rec is not None:
            rec.scan(OP_OWRITE, name, 0, n, _record_bytes(buf))
        hit = np.arange(n) == i
        vv = np.broadcast_to(np.asarray(v, buf.dtype), buf.shape)
        buf[...] = oassign_vec(hit, vv, buf)
        if not hit.any():
            raise ContractViolation(f"owrite index out of range for length {n}")
        return
    n = len(buf)
    if rec is not None:
        rec.scan(OP_OWRITE, name, 0, n, 1)
    ok = 0
    for k in range(n):
        hit = int(k == i)
        buf[k] = (buf[k], v)[hit]
        ok |= hit
    if not ok:
        raise ContractViolation(f"owrite index out of range for length {n}")


@njit(cache=True)
def oaccess_kernel(a, i, tb, ts, op, arr, itemsize):
    """Scalar oaccess over a 1-D int64 array inside kernels."""
    if ts[1]:
        _nb.scan(tb, ts, op, arr, 0, a.shape[0], itemsize)
    out = np.int64(0)
    for k in range(a.shape[0]):
        out = _nb.sel(k == i, a[k], out)
    return out


def relu(x):
    """max(0, x) without a data-dependent branch."""
    return oassign(x > 0, x, 0 if isinstance(x, int) else 0.0)


def maxpool2x2(window: Sequence) -> Any:
    """Maximum of four values by three branchless selections."""
    a, b, c, d = window
    m1 = oassign(a > b, a, b)
    m2 = oassign(c > d, c, d)
    return oassign(m1 > m2, m1, m2)
