"""Numba-side helpers: trace emission and branchless selection.

Kernels receive the recorder's run buffer ``tb`` and state vector ``ts``
(see :mod:`oblivid.trace`) and append runs exactly as the Python recorder
does.  Hot loops guard trace calls with ``if ts[1]:`` (the public recording switch)
so a disabled recorder costs one predictable branch.  Selection is mask-and-blend by default; setting ``OBLIVID_SELECT=cmov``
at import time switches to a ternary that LLVM lowers to ``select``/``cmov``.
"""
from __future__ import annotations

import os

import numpy as np
from llvmlite import ir
from numba import njit, objmode, types
from numba.extending import intrinsic

from .trace import flush_sink

_CMOV = os.environ.get("OBLIVID_SELECT", "blend") == "cmov"


@njit(cache=True)
def _flush(ts):
    sid = ts[3]
    with objmode():
        flush_sink(sid)


@njit(cache=True, inline="always")
def emit(tb, ts, op, arr, lo, hi):
    if ts[1] == 0 or hi <= lo:
        return
    n = ts[0]
    if n > 0:
        j = n - 1
        if tb[j, 0] == op and tb[j, 1] == arr and tb[j, 3] == lo:
            tb[j, 3] = hi
            return
    if n == tb.shape[0]:
        _flush(ts)
        n = ts[0]
    tb[n, 0] = op
    tb[n, 1] = arr
    tb[n, 2] = lo
    tb[n, 3] = hi
    ts[0] = n + 1


@njit(cache=True, inline="always")
def touch(tb, ts, op, arr, index, itemsize):
    if ts[1] == 0:
        return
    sh = ts[2]
    emit(tb, ts, op, arr, (index * itemsize) >> sh, (((index + 1) * itemsize - 1) >> sh) + 1)


@njit(cache=True, inline="always")
def scan(tb, ts, op, arr, start, stop, itemsize):
    if ts[1] == 0 or stop <= start:
        return
    sh = ts[2]
    emit(tb, ts, op, arr, (start * itemsize) >> sh, ((stop * itemsize - 1) >> sh) + 1)


if _CMOV:
    @njit(cache=True, inline="always")
    def sel(cond, a, b):
        return a if cond else b
else:
    @njit(cache=True, inline="always")
    def sel(cond, a, b):
        # cond is 0/1; blend on the integer payload.
        m = -np.int64(cond)
        return (np.int64(a) & m) | (np.int64(b) & ~m)


@intrinsic
def _f2i(typingctx, x):
    sig = types.int64(types.float64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.IntType(64))
    return sig, codegen


@intrinsic
def _i2f(typingctx, x):
    sig = types.float64(types.int64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.DoubleType())
    return sig, codegen


@njit(cache=True, inline="always")
def fsel(cond, a, b):
    """Float select as a mask blend on the IEEE bits (exact for inf and nan)."""
    m = -np.int64(cond)
    return _i2f((_f2i(np.float64(a)) & m) | (_f2i(np.float64(b)) & ~m))


@njit(cache=True, inline="always")
def imin(a, b):
    return sel(a < b, a, b)


@njit(cache=True, inline="always")
def imax(a, b):
    return sel(a > b, a, b)
