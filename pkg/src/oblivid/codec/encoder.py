"""Camera-side OVC encoder.

The encoder is trusted and not oblivious.  It runs closed-loop: every block is
predicted from the same reconstruction the decoder will produce, so
quantization error never accumulates across blocks or frames.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..trace import NULL_BUF
from . import transform as tf
from .boolcoder import ChunkEncoder, chunk_decision_bound
from .container import SLOTS, Header, PaddingOverflow
from .predict import N_MODES, inter_kernel, intra_candidates
from .tree import TREE, token_path

_NULL_TS = np.array([0, 0, 6, 0], np.int64)


def default_n_chunk() -> int:
    return chunk_decision_bound(tuple(n.prob for n in TREE.nodes))


def encode_slots(enc: ChunkEncoder, slots: np.ndarray) -> None:
    """Code a block's 19 slots up to the last nonzero one, then EOB if short."""
    nz = np.flatnonzero(slots)
    end = int(nz[-1]) + 1 if len(nz) else 0
    probs = TREE.nodes
    for v in slots[:end]:
        for node, bit in token_path(int(v)):
            enc.encode(bit, probs[node].prob)
    if end < SLOTS:
        for node, bit in token_path(None):
            enc.encode(bit, probs[node].prob)


def _residual_levels(block: np.ndarray, pred: np.ndarray, q: int):
    levels = tf.quantize(tf.forward(block.astype(np.int64) - pred), q)
    recon = np.clip(pred + tf.dequant_inverse_transform(levels, q), 0, 255)
    return levels, recon


def _encode_block(frame, recon, prev, by, bx, q, inter, radius):
    blk = frame[by * 4: by * 4 + 4, bx * 4: bx * 4 + 4].astype(np.int64)
    slots = np.zeros(SLOTS, np.int64)
    if inter:
        best = None
        pred = np.empty((4, 4), np.int64)
        # smallest SAD, then smallest displacement
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                inter_kernel(prev, by, bx, dy, dx, radius, pred, NULL_BUF, _NULL_TS, 0, 0)
                cost = (int(np.abs(blk - pred).sum()), abs(dy) + abs(dx))
                if best is None or cost < best[0]:
                    best = (cost, dy, dx, pred.copy())
        _, dy, dx, p = best
        slots[1], slots[2] = dy, dx
    else:
        cand = np.empty((N_MODES, 4, 4), np.int64)
        intra_candidates(recon, by, bx, cand, NULL_BUF, _NULL_TS, 0)
        sad = np.abs(cand - blk).sum(axis=(1, 2))
        mode = int(np.argmin(sad))
        slots[0] = mode
        p = cand[mode]
    levels, rec_blk = _residual_levels(blk, p, q)
    slots[3:] = levels.reshape(16)[tf.ZIGZAG]
    recon[by * 4: by * 4 + 4, bx * 4: bx * 4 + 4] = rec_blk
    return slots


def encode_units(frames: Sequence[np.ndarray], quant: int, keyframe_only: bool,
                 radius: int = 1, frame_level: bool = False):
    """Entropy-coded units (unpadded) and the encoder's reconstruction."""
    units: list[tuple[int, int, bytes, int]] = []
    prev = None
    recons = []
    max_dec = 0
    for f, frame in enumerate(frames):
        frame = np.asarray(frame, np.uint8)
        h, w = frame.shape
        recon = np.zeros_like(frame)
        inter = (not keyframe_only) and f > 0
        enc = ChunkEncoder()
        for by in range(h // 4):
            if not frame_level:
                enc = ChunkEncoder()
            for bx in range(w // 4):
                slots = _encode_block(frame, recon, prev, by, bx, quant, inter, radius)
                encode_slots(enc, slots)
            if not frame_level:
                data = enc.finish()
                max_dec = max(max_dec, enc.max_count)
                units.append((f, by, data, len(data) * 8))
        if frame_level:
            data = enc.finish()
            max_dec = max(max_dec, enc.max_count)
            units.append((f, 0, data, len(data) * 8))
        recons.append(recon)
        prev = recon
    return units, recons, max_dec


def encode_stream(frames: Sequence[np.ndarray], quant: int = 1, bits_bound: int | None = None,
                  keyframe_only: bool = True, radius: int = 1, frame_level: bool = False,
                  n_chunk: int | None = None) -> bytes:
    """Encode grayscale frames into an OVC container.

    ``bits_bound=None`` picks the smallest bound that fits every unit.  A unit
    that exceeds an explicit bound raises :class:`PaddingOverflow`.
    """
    frames = [np.asarray(f) for f in frames]
    if not frames:
        raise ValueError("need at least one frame")
    h, w = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != (h, w):
            raise ValueError(f"frame {i} is {f.shape[1]}x{f.shape[0]}, expected {w}x{h}")
    if h % 4 or w % 4:
        raise ValueError(f"resolution {w}x{h} is not a multiple of 4")
    if quant < 1:
        raise ValueError("quant must be >= 1")
    if not 0 <= radius <= 255:
        raise ValueError("radius must be within 0..255")
    units, _, max_dec = encode_units(frames, quant, keyframe_only, radius, frame_level)
    need = max(bits for *_, bits in units)
    if bits_bound is None:
        bits_bound = max(16, need)
    if bits_bound % 16:
        raise ValueError("bits_bound must be a multiple of 16")
    for f, u, _, bits in units:
        if bits > bits_bound:
            raise PaddingOverflow(
                f"frame {f}, row {u}: {bits} bits exceed bits_bound {bits_bound}", f, u, bits)
    nc = default_n_chunk() if n_chunk is None else n_chunk
    if nc < max_dec or not 1 <= nc <= 255:
        raise ValueError(f"n_chunk {nc} below the {max_dec} decisions used by one chunk")
    hdr = Header(w, h, len(frames), quant, bits_bound, keyframe_only, nc, radius, frame_level)
    out = bytearray(hdr.pack())
    ub = bits_bound // 8
    for *_, data, _ in units:
        out += data + bytes(ub - len(data))
    return bytes(out)


def reconstruct(frames: Sequence[np.ndarray], quant: int, keyframe_only: bool = True,
                radius: int = 1) -> list[np.ndarray]:
    """What the decoder should output for these frames."""
    return encode_units(frames, quant, keyframe_only, radius)[1]
