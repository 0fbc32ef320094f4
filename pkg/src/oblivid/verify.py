"""Obliviousness sweep over every hardened operation.

Each entry pairs an operation with an input generator whose draws share the
public parameters of a config (resolution, bounds, buffer sizes) and vary
everything else: pixel content, box positions, mode choices, which records are
real.  Negative-control fixtures run alongside and are expected to fail.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .channel import CircularBuffer, consume, produce_masked
from .codec.boolcoder import ChunkState, entropy_decode_bit
from .codec.container import parse_header
from .codec.decoder import decode_stream
from .codec.encoder import default_n_chunk, encode_stream
from .codec.predict import N_MODES, inter_predict, intra_predict
from .config import PipelineConfig
from .core import oaccess, osort
from .oracle import (PublicParams, gen_lookup, gen_sort_input, gen_trip_count, leaky_early_exit_sort,
                     leaky_lookup, leaky_trip_count, verify_oblivious)
from .tracking import detect_features, match_features
from .vision.bgsub import BgParams, BgState, bg_subtract_frame
from .vision.ccl import detect_bboxes_striped
from .vision.crop import crop_object, resize_object

DEFAULT_RESOLUTIONS = ((64, 64), (128, 128))


@dataclass(frozen=True)
class Check:
    name: str
    op: Callable[[Any, Any], Any]
    gen: Callable[[np.random.Generator], Any]


def public_params(cfg: PipelineConfig) -> PublicParams:
    v = {k: getattr(cfg, k) for k in ("width", "height", "max_labels", "max_objects", "obj_width",
                                      "obj_height", "n_temp", "n_features", "m_max", "b_components",
                                      "buffer_size")}
    if cfg.k_prime:
        v["k_prime"] = cfg.k_prime
    v["n_chunk"] = cfg.n_chunk or default_n_chunk()
    if cfg.bits_bound:
        v["bits_bound"] = cfg.bits_bound
    return PublicParams(v)


# -- secret content ------------------------------------------------------------

def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Noise, flat, gradient or blocky content; the kind is itself secret."""
    kind = rng.integers(4)
    if kind == 0:
        return rng.integers(0, 256, (h, w), dtype=np.uint8)
    if kind == 1:
        return np.full((h, w), rng.integers(256), np.uint8)
    if kind == 2:
        y, x = np.mgrid[:h, :w]
        a, b = rng.uniform(-3, 3, 2)
        return np.clip(128 + a * y + b * x, 0, 255).astype(np.uint8)
    small = rng.integers(0, 256, (-(-h // 8), -(-w // 8)), dtype=np.uint8)
    return np.kron(small, np.ones((8, 8), np.uint8))[:h, :w]


def _blobs(rng: np.random.Generator, h: int, w: int, count: int) -> np.ndarray:
    m = np.zeros((h, w), np.uint8)
    for _ in range(int(rng.integers(0, count + 1))):
        bh, bw = rng.integers(1, max(2, h // 6), 2)
        y, x = rng.integers(0, h - bh + 1), rng.integers(0, w - bw + 1)
        m[y:y + bh, x:x + bw] = 255
    return m


def _box(rng: np.random.Generator, h: int, w: int, p: int, q: int):
    bh, bw = int(rng.integers(1, q + 1)), int(rng.integers(1, p + 1))
    t, l = int(rng.integers(0, h - bh + 1)), int(rng.integers(0, w - bw + 1))
    return t, l, t + bh - 1, l + bw - 1


def _row_bits_bound(w: int, quant: int) -> int:
    """A bits-per-row bound no content can exceed: twice what worst-case noise needs."""
    rng = np.random.default_rng(0)
    noise = [rng.integers(0, 256, (4, w), dtype=np.uint8) for _ in range(2)]
    need = parse_header(encode_stream(noise, quant, keyframe_only=False)).bits_bound
    return -(-2 * need // 16) * 16


# -- checks ----------------------------------------------------------------------

def checks_for(cfg: PipelineConfig) -> list[Check]:
    """Operation/generator pairs for ``cfg``'s public parameters."""
    h, w, p, q = cfg.height, cfg.width, cfg.obj_width, cfg.obj_height
    quant, radius = cfg.quant, cfg.radius
    bound = cfg.bits_bound or _row_bits_bound(w, quant)
    bg_params = BgParams(alpha=cfg.alpha, b=cfg.b_components, m_max=cfg.m_max)
    n_chunk = cfg.n_chunk or default_n_chunk()
    bh, bw = h // 4, w // 4
    out: list[Check] = []

    def gen_rows(rng):
        # two frames of one block row: a keyframe and an inter-coded frame
        a = _texture(rng, 4, w)
        b = a if rng.integers(2) else _texture(rng, 4, w)
        return encode_stream([a, b], quant, bound, keyframe_only=False, radius=radius,
                             n_chunk=n_chunk)
    out.append(Check("codec.row_decode", lambda x, r: decode_stream(x, r), gen_rows))

    def gen_bits(rng):
        chunks = 4
        data = rng.integers(0, 256, 2 * chunks, dtype=np.uint8)
        return data, rng.integers(16, 241, chunks * n_chunk), rng.integers(0, 2, chunks * n_chunk)

    def op_bits(x, rec):
        data, probs, dummy = x
        k = 0
        for c in range(len(data) // 2):
            st = ChunkState(int(data[2 * c]) | int(data[2 * c + 1]) << 8)
            for _ in range(n_chunk):
                entropy_decode_bit(bool(dummy[k]), 2 * c, int(probs[k]), st, data, rec)
                k += 1
    out.append(Check("codec.entropy_bit", op_bits, gen_bits))

    def gen_intra(rng):
        return _texture(rng, h, w), rng.integers(0, N_MODES, (bh, bw))

    def op_intra(x, rec):
        recon, modes = x
        for by in range(bh):
            for bx in range(bw):
                intra_predict((by, bx), recon, int(modes[by, bx]), rec)
    out.append(Check("codec.intra_predict", op_intra, gen_intra))

    def gen_inter(rng):
        return _texture(rng, h, w), rng.integers(-radius - 1, radius + 2, (bh, bw, 2))

    def op_inter(x, rec):
        prev, mv = x
        for by in range(bh):
            for bx in range(bw):
                inter_predict((by, bx), prev, (int(mv[by, bx, 0]), int(mv[by, bx, 1])), radius, rec)
    out.append(Check("codec.inter_predict", op_inter, gen_inter))

    def gen_bg(rng):
        return [_texture(rng, h, w) for _ in range(3)]

    def op_bg(frames, rec):
        st = BgState.create(h, w, bg_params)
        for f in frames:
            bg_subtract_frame(st, f, rec)
    out.append(Check("vision.bg_subtract_frame", op_bg, gen_bg))

    for stripes in (1, 8):
        n = max(1, cfg.max_labels // stripes)

        def op_box(m, rec, n=n, stripes=stripes):
            detect_bboxes_striped(m, n, stripes, rec)
        out.append(Check(f"vision.detect_bboxes.stripes{stripes}", op_box,
                         lambda rng: _blobs(rng, h, w, cfg.max_objects)))

    def gen_crop(rng):
        return _texture(rng, h, w), _box(rng, h, w, p, q)
    out.append(Check("vision.crop", lambda x, r: crop_object(x[0], x[1], p, q, r), gen_crop))

    def gen_resize(rng):
        return _texture(rng, q, p), _box(rng, q, p, p, q)
    out.append(Check("vision.resize", lambda x, r: resize_object(x[0], x[1], r), gen_resize))

    out.append(Check("tracking.detect_features",
                     lambda img, r: detect_features(img, cfg.n_temp, cfg.n_features, r),
                     lambda rng: _texture(rng, h, w)))

    def gen_match(rng):
        # features are computed untraced; only matching is under test
        return tuple(detect_features(_texture(rng, q, p), cfg.n_temp, cfg.n_features)
                     for _ in range(2))
    out.append(Check("tracking.match_features", lambda x, r: match_features(x[0], x[1], r), gen_match))

    k = cfg.max_objects

    def gen_channel(rng):
        history = [(rng.integers(0, 256, (k, q, p), dtype=np.uint8), rng.integers(0, 2, k))
                   for _ in range(3)]
        return history

    def op_channel(history, rec):
        buf = CircularBuffer(cfg.buffer_size, p, q)
        for f, (pix, real) in enumerate(history):
            produce_masked(pix, real, buf, f, rec)
            consume(buf, cfg.k_prime, rec)
    out.append(Check("channel.produce_consume", op_channel, gen_channel))

    n_arr = 256
    out.append(Check("core.oaccess", lambda x, r: oaccess(x[0], x[1], r), gen_lookup(n_arr)))
    out.append(Check("core.osort", lambda x, r: osort(list(x), rec=r), gen_sort_input(64)))
    return out


def negative_controls() -> list[Check]:
    return [
        Check("control.branchy_lookup", leaky_lookup, gen_lookup(256)),
        Check("control.early_exit_sort", leaky_early_exit_sort, gen_sort_input(32)),
        Check("control.secret_trip_count", leaky_trip_count, gen_trip_count(64)),
    ]


def verify_all(cfg: PipelineConfig | None = None, trials: int = 20, seed: int = 0,
               resolutions=DEFAULT_RESOLUTIONS, controls: bool = True,
               cache_line_bytes: int = 1, only: tuple[str, ...] = ()) -> dict:
    """Verdict map for every check at every resolution.

    ``passed`` is true iff every real check passed and every negative control
    failed.  The result holds no timings, so equal seeds give equal JSON.
    """
    cfg = cfg or PipelineConfig()
    verdicts: dict[str, dict] = {}
    ok = True
    for w, h in resolutions:
        rcfg = cfg.with_(width=w, height=h, obj_width=min(cfg.obj_width, w),
                         obj_height=min(cfg.obj_height, h),
                         max_labels=min(cfg.max_labels, w * h))
        for chk in checks_for(rcfg):
            if only and not any(chk.name.startswith(o) for o in only):
                continue
            v = verify_oblivious(chk.op, chk.gen, trials, seed, cache_line_bytes)
            verdicts[f"{w}x{h}/{chk.name}"] = v.to_dict()
            ok &= v.passed
    ctrl: dict[str, dict] = {}
    if controls:
        for chk in negative_controls():
            v = verify_oblivious(chk.op, chk.gen, trials, seed, cache_line_bytes)
            d = v.to_dict()
            d["expected"] = "fail"
            ctrl[chk.name] = d
            ok &= not v.passed
    return {
        "passed": bool(ok),
        "trials": trials,
        "seed": seed,
        "cache_line_bytes": cache_line_bytes,
        "public_params": {f"{w}x{h}": dict(public_params(cfg.with_(
            width=w, height=h, obj_width=min(cfg.obj_width, w), obj_height=min(cfg.obj_height, h),
            max_labels=min(cfg.max_labels, w * h))).values) for w, h in resolutions},
        "verdicts": verdicts,
        "controls": ctrl,
    }


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
