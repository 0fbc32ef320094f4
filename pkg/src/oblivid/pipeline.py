"""End-to-end runner for the two analytics pipelines.

classifier-style: decode, background subtraction, bounding boxes, object
selection, crop, resize, channel, consumer stand-in.

detector-style: the same front end used as a filter; whole frames are resized
into the channel and keypoints are detected and matched frame to frame.

Every stage records into its own trace recorder, so per-stage digests do not
depend on how stages interleave.
"""
from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from . import _nb
from .channel import CircularBuffer, consume, consumer_stub, produce_masked
from .codec.container import container_size, parse_header
from .codec.decoder import _decode
from .codec.encoder import encode_stream
from .config import ConfigError, PipelineConfig
from .core import OP_OSORT, sort_rows_kernel
from .ingest import ingest_frames
from .trace import TraceRecorder, kernel_args, op_id
from .tracking import detect_features, match_features
from .vision.bgsub import BgParams, BgState, bg_subtract_frame
from .vision.ccl import BIG, detect_bboxes_striped
from .vision.crop import crop_object, resize_object

STAGES = ("decode", "bgsub", "bbox", "select", "crop", "resize", "channel", "features")
OP_SELECT = op_id("pipeline.select")
_AREA_SHIFT = 20


@njit(cache=True)
def select_kernel(boxes, k_max, min_px, p, q, out, real, tb, ts, arr):
    """Largest ``k_max`` real boxes (area >= ``min_px``), clamped to ``q x p``.

    Empty slots come back as (0, 0, 0, 0) with ``real == 0``.
    """
    n = boxes.shape[0]
    m = 1
    while m < n:
        m *= 2
    keys = np.empty(m, np.int64)
    rows = np.zeros((m, 5), np.int64)
    if ts[1]:
        _nb.scan(tb, ts, OP_SELECT, arr, 0, n, 32)
    for i in range(m):
        ii = min(i, n - 1)
        inb = np.int64(i < n)
        t = boxes[ii, 0]
        l = boxes[ii, 1]
        b = boxes[ii, 2]
        r = boxes[ii, 3]
        live = inb & np.int64(t != BIG)
        area = _nb.sel(live, (b - t + 1) * (r - l + 1), 0)
        ok = live & np.int64(area >= min_px)
        keys[i] = _nb.sel(ok, ((np.int64(1) << 40) - area) << _AREA_SHIFT | i,
                          (np.int64(1) << 61) | i)
        rows[i, 0] = _nb.sel(ok, t, 0)
        rows[i, 1] = _nb.sel(ok, l, 0)
        rows[i, 2] = _nb.sel(ok, _nb.imin(b, t + q - 1), 0)
        rows[i, 3] = _nb.sel(ok, _nb.imin(r, l + p - 1), 0)
        rows[i, 4] = ok
    sort_rows_kernel(keys, rows, tb, ts, OP_OSORT, arr, 40)
    for i in range(k_max):
        for f in range(4):
            out[i, f] = rows[i, f]
        real[i] = rows[i, 4]


@dataclass
class RunReport:
    config: dict
    frames: int = 0
    boxes: list[list[list[int]]] = field(default_factory=list)
    objects_in: list[int] = field(default_factory=list)
    overflow: list[bool] = field(default_factory=list)
    matches: list[int] = field(default_factory=list)
    digests: dict[str, str] = field(default_factory=dict)
    channel: dict = field(default_factory=dict)
    stage_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        d = {k: getattr(self, k) for k in ("frames", "boxes", "objects_in", "overflow",
                                            "matches", "digests", "channel", "config")}
        if timing:
            d["stage_ms"] = self.stage_ms
        return d


class _Stage:
    def __init__(self, name: str, line: int, trace: bool):
        self.name = name
        self.rec = TraceRecorder(line) if trace else None
        self.ms = 0.0
        self._t = 0.0

    def __enter__(self):
        self._t = time.perf_counter()
        return self.rec

    def __exit__(self, *exc):
        self.ms += (time.perf_counter() - self._t) * 1e3


def load_input(src, cfg: PipelineConfig) -> bytes:
    """Container bytes for ``src``: raw container bytes, an ``.ovc`` file, or a frame
    source (directory, frame file, or list of arrays) encoded with ``cfg``'s codec settings."""
    if isinstance(src, (bytes, bytearray)):
        return bytes(src)
    if isinstance(src, (str, Path)) and Path(src).is_file() and Path(src).read_bytes()[:4] == b"OVC1":
        return Path(src).read_bytes()
    frames = ingest_frames(src) if isinstance(src, (str, Path)) else [np.asarray(f) for f in src]
    if frames and frames[0].shape != (cfg.height, cfg.width):
        h, w = frames[0].shape
        raise ConfigError(f"width/height: input is {w}x{h}, config says {cfg.width}x{cfg.height}")
    return encode_stream(frames, cfg.quant, cfg.bits_bound, cfg.keyframe_only, cfg.radius,
                         cfg.frame_level, cfg.n_chunk)


def run_pipeline(src, cfg: PipelineConfig | None = None, trace: bool = True,
                 pipelined: bool = False) -> RunReport:
    """Run the configured pipeline over ``src``; see :func:`load_input` for inputs.

    ``pipelined=True`` decodes on a worker thread feeding a bounded queue.
    """
    cfg = cfg or PipelineConfig()
    data = load_input(src, cfg)
    hdr = parse_header(data)
    if (hdr.width, hdr.height) != (cfg.width, cfg.height):
        raise ConfigError(f"width/height: container is {hdr.width}x{hdr.height}, "
                          f"config says {cfg.width}x{cfg.height}")
    if len(data) != container_size(hdr):
        raise ConfigError(f"input: container holds {len(data)} bytes, header implies "
                          f"{container_size(hdr)}")
    if cfg.bits_bound is not None and hdr.bits_bound != cfg.bits_bound:
        raise ConfigError(f"bits_bound: container uses {hdr.bits_bound}, config says {cfg.bits_bound}")

    st = {s: _Stage(s, cfg.cache_line_bytes, trace) for s in STAGES}
    bg = BgState.create(cfg.height, cfg.width,
                        BgParams(alpha=cfg.alpha, b=cfg.b_components, m_max=cfg.m_max))
    detector = cfg.variant == "detector"
    k_in = 1 if detector else cfg.max_objects
    p, q = cfg.obj_width, cfg.obj_height
    buf = CircularBuffer(cfg.buffer_size, p, q)
    report = RunReport(cfg.to_dict())
    stats = {"reals_processed": 0, "dummies_processed": 0, "reals_overwritten": 0, "max_delay": 0}
    prev_feats = None
    frames = _frame_source(np.frombuffer(data, np.uint8), hdr, st["decode"], pipelined)

    for f, frame in enumerate(frames):
        warm = np.int64(f >= cfg.warmup_frames)   # public: the model is still learning
        with st["bgsub"] as rec:
            mask = bg_subtract_frame(bg, frame, rec)
        with st["bbox"] as rec:
            res = detect_bboxes_striped(mask, cfg.labels_per_stripe, cfg.stripes, rec, cfg.workers)
        with st["select"] as rec:
            sel = np.zeros((cfg.max_objects, 4), np.int64)
            real = np.zeros(cfg.max_objects, np.int64)
            tb, ts = kernel_args(rec)
            select_kernel(res.boxes, cfg.max_objects, cfg.min_box_pixels, p, q, sel, real, tb, ts,
                          rec.array_id("boxes") if rec else 0)
        report.boxes.append(sorted([int(v) for v in b] for b, r in zip(sel, real) if r))
        report.overflow.append(res.overflow)

        if detector:
            with st["resize"] as rec:
                pix = resize_object(frame, (0, 0, cfg.height - 1, cfg.width - 1), rec,
                                    out_shape=(q, p))[None]
            flags = np.array([real.max()], np.int64) * warm
            with st["features"] as rec:
                feats = detect_features(pix[0], cfg.n_temp, cfg.n_features, rec)
                if prev_feats is not None:
                    m = match_features(feats, prev_feats, rec)
                    report.matches.append(int(np.isfinite(m.distance).sum()))
                else:
                    report.matches.append(0)
                prev_feats = feats
        else:
            pix = np.zeros((k_in, q, p), np.uint8)
            for i in range(k_in):
                t, l, b, r = (int(v) for v in sel[i])
                with st["crop"] as rec:
                    obj = crop_object(frame, (t, l, b, r), p, q, rec)
                with st["resize"] as rec:
                    pix[i] = resize_object(obj, None, rec)
            flags = real * warm
        report.objects_in.append(int(flags.sum()))

        with st["channel"] as rec:
            stats["reals_overwritten"] += produce_masked(pix, flags, buf, f, rec)
            out = consume(buf, cfg.k_prime, rec)
            consumer_stub(out)
        for o in out:
            if o.is_dummy:
                stats["dummies_processed"] += 1
            else:
                stats["reals_processed"] += 1
                stats["max_delay"] = max(stats["max_delay"], f - o.frame_no)

    report.frames = len(report.boxes)
    report.channel = stats
    report.digests = {s: v.rec.digest() for s, v in st.items() if v.rec is not None}
    report.stage_ms = {s: round(v.ms, 3) for s, v in st.items()}
    return report


def _frame_source(buf: np.ndarray, hdr, stage: _Stage, pipelined: bool):
    def gen():
        it = _decode(buf, hdr, stage.rec)
        while True:
            with stage:
                try:
                    fr = next(it)
                except StopIteration:
                    return
            yield fr

    if not pipelined:
        yield from gen()
        return
    q: queue.Queue = queue.Queue(maxsize=2)
    done = object()
    err: list[BaseException] = []

    def worker():
        try:
            for fr in gen():
                q.put(fr)
        except BaseException as exc:  # surfaced on the consumer side
            err.append(exc)
        finally:
            q.put(done)

    th = threading.Thread(target=worker, daemon=True)
    th.start()
    while (item := q.get()) is not done:
        yield item
    th.join()
    if err:
        raise err[0]
