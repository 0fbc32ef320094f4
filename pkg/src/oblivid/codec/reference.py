"""Plain sequential OVC decoder.

Branches on every decoded bit and writes coefficients straight into place.
It is the non-oblivious baseline for benchmarks and a second opinion on the
oblivious decoder's output.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..trace import NULL_BUF
from .container import HEADER_BYTES, SLOTS, container_size, parse_header
from .decoder import reconstruct_kernel
from .transform import ZIGZAG
from .tree import PACKED, START_NODE

_NULL_TS = np.array([0, 0, 6, 0], np.int64)


@njit(cache=True)
def plain_parse_kernel(data, nodes, vals):
    """Fill ``vals`` (zeroed, length blocks*19) from one unit; returns slots decoded."""
    p_u = vals.shape[0]
    pos = 0
    cur = START_NODE
    reg = 0
    for c in range(data.shape[0] // 2):
        if pos >= p_u:
            break
        v = np.int64(data[2 * c]) | (np.int64(data[2 * c + 1]) << 8)
        low = 0
        r = 65536
        while r >= 2 and pos < p_u:
            w = nodes[cur]
            s = 1 + (((r - 1) * (w & 0xFF)) >> 8)
            if v >= low + s:
                bit = 1
                low += s
                r -= s
            else:
                bit = 0
                r = s
            if (w >> 26) & 1:
                reg = reg * 2 + bit
            ends = (w >> 29) & 1 if bit else (w >> 28) & 1
            if ends:
                if bit == 0 and (w >> 30) & 1:
                    pos = (pos // SLOTS + 1) * SLOTS
                else:
                    mag = (w >> 32) + reg
                    vals[pos] = -mag if ((w >> 27) & 1) and bit else mag
                    pos += 1
                reg = 0
            cur = (w >> 16) & 0xFF if bit else (w >> 8) & 0xFF
    return pos


def plain_decode_stream(data: bytes) -> list[np.ndarray]:
    """Decode an OVC container without any access-pattern hardening."""
    hdr = parse_header(data)
    if len(data) != container_size(hdr):
        raise ValueError(f"container holds {len(data)} bytes, header implies {container_size(hdr)}")
    buf = np.frombuffer(data, np.uint8)
    ub = hdr.unit_bytes
    blocks = hdr.blocks_per_unit
    rows_per_unit = hdr.block_rows if hdr.frame_level else 1
    prev = np.zeros((hdr.height, hdr.width), np.uint8)
    off = HEADER_BYTES
    out = []
    for f in range(hdr.frames):
        recon = np.zeros((hdr.height, hdr.width), np.uint8)
        inter = (not hdr.keyframe_only) and f > 0
        for u in range(hdr.units_per_frame):
            vals = np.zeros(blocks * SLOTS, np.int64)
            plain_parse_kernel(buf[off: off + ub], PACKED, vals)
            off += ub
            reconstruct_kernel(recon, prev, vals.reshape(blocks, SLOTS), u * rows_per_unit,
                               rows_per_unit, hdr.quant, inter, hdr.radius, ZIGZAG,
                               NULL_BUF, _NULL_TS, 0, 0, 0, 0)
        out.append(recon)
        prev = recon
    return out
