"""OVC container: fixed 24-byte header followed by equal-size padded units.

Header (little endian)::

    4s  magic "OVC1"
    u16 width, u16 height
    u32 frame_count
    u16 quant
    u32 bits_bound       bits per padded unit, a multiple of 16
    u8  flags            bit 0 keyframe_only, bit 1 frame-level padding
    u8  n_chunk          max decisions per 2-byte chunk
    4s  reserved         byte 0 carries the inter-prediction radius

A unit is one row of 4x4 blocks, or a whole frame with frame-level padding.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"OVC1"
HEADER = struct.Struct("<4sHHIHIBB4s")
HEADER_BYTES = HEADER.size
assert HEADER_BYTES == 24

FLAG_KEYFRAME_ONLY = 1
FLAG_FRAME_LEVEL = 2
BLOCK = 4
SLOTS = 19          # mode, mv_x, mv_y, 16 coefficients


class DecodeError(ValueError):
    """Container is malformed or truncated."""

    def __init__(self, msg: str, row: int | None = None):
        super().__init__(msg)
        self.row = row


class PaddingOverflow(ValueError):
    """An encoded unit does not fit the configured bound."""

    def __init__(self, msg: str, frame: int, row: int, bits: int):
        super().__init__(msg)
        self.frame, self.row, self.bits = frame, row, bits


@dataclass(frozen=True)
class Header:
    width: int
    height: int
    frames: int
    quant: int
    bits_bound: int
    keyframe_only: bool
    n_chunk: int
    radius: int = 1
    frame_level: bool = False

    @property
    def block_rows(self) -> int:
        return self.height // BLOCK

    @property
    def block_cols(self) -> int:
        return self.width // BLOCK

    @property
    def units_per_frame(self) -> int:
        return 1 if self.frame_level else self.block_rows

    @property
    def blocks_per_unit(self) -> int:
        return self.block_cols * (self.block_rows if self.frame_level else 1)

    @property
    def unit_bytes(self) -> int:
        return self.bits_bound // 8

    @property
    def flags(self) -> int:
        return FLAG_KEYFRAME_ONLY * self.keyframe_only | FLAG_FRAME_LEVEL * self.frame_level

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.width, self.height, self.frames, self.quant,
                           self.bits_bound, self.flags, self.n_chunk,
                           bytes([self.radius, 0, 0, 0]))

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.width % BLOCK or self.height % BLOCK:
            raise DecodeError(f"bad resolution {self.width}x{self.height}")
        if self.quant < 1:
            raise DecodeError("quant must be >= 1")
        if self.bits_bound <= 0 or self.bits_bound % 16:
            raise DecodeError(f"bits_bound {self.bits_bound} is not a positive multiple of 16")
        if self.n_chunk < 1:
            raise DecodeError("n_chunk must be >= 1")


def container_size(h: Header) -> int:
    """Byte length of a container; depends on header fields only."""
    return HEADER_BYTES + h.frames * h.units_per_frame * h.unit_bytes


def parse_header(data: bytes) -> Header:
    if len(data) < HEADER_BYTES:
        raise DecodeError(f"container shorter than the {HEADER_BYTES}-byte header")
    magic, w, hgt, frames, quant, bits, flags, n_chunk, reserved = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if flags & ~(FLAG_KEYFRAME_ONLY | FLAG_FRAME_LEVEL):
        raise DecodeError(f"unknown flags 0x{flags:02x}")
    h = Header(w, hgt, frames, quant, bits, bool(flags & FLAG_KEYFRAME_ONLY), n_chunk,
               reserved[0], bool(flags & FLAG_FRAME_LEVEL))
    h.validate()
    return h


def unit_slices(data: bytes, h: Header):
    """Yield ``(frame, unit, bytes)``; a short container fails at the first missing unit."""
    off = HEADER_BYTES
    ub = h.unit_bytes
    for f in range(h.frames):
        for u in range(h.units_per_frame):
            if off + ub > len(data):
                raise DecodeError(f"container truncated in frame {f}, row {u}", row=u)
            yield f, u, data[off: off + ub]
            off += ub
