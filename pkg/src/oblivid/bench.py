"""Latency benchmarks for the stages with a naive oblivious counterpart.

Every row reports the median wall-clock time over ``reps`` timed calls that
follow one untimed warm-up call.  Variants:

* ``oblivious``: the optimized data-oblivious implementation
* ``naive-oblivious``: the straightforward oblivious formulation
  (sliding-window crop, whole-image scan per label read, frame-level decode)
* ``non-oblivious``: a plain implementation with data-dependent accesses
"""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, TextIO

import numpy as np
from scipy import ndimage

from .codec.decoder import decode_stream
from .codec.encoder import encode_stream
from .codec.reference import plain_decode_stream
from .synth import synth_video
from .vision.ccl import detect_bboxes_striped, naive_detect_bboxes, reference_boxes
from .vision.crop import crop_object, naive_crop

CSV_FIELDS = ("stage", "variant", "width", "height", "param_set", "median_ms", "reps")
STAGES = ("crop", "bbox", "decode")
VARIANTS = ("oblivious", "naive-oblivious", "non-oblivious")
NAIVE_BBOX_SIDE = 128   # the whole-image-scan labeller is quadratic in pixels


@dataclass(frozen=True)
class BenchRow:
    stage: str
    variant: str
    width: int
    height: int
    param_set: str
    median_ms: float
    reps: int


def time_median(fn: Callable[[], object], reps: int) -> float:
    """Median milliseconds of ``reps`` calls after one warm-up call."""
    fn()
    ts = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        ts.append((time.perf_counter() - t) * 1e3)
    return statistics.median(ts)


def scene_mask(width: int, height: int, seed: int = 0, busy: bool = True) -> np.ndarray:
    """Foreground mask of irregular blobs from thresholded smoothed noise.

    ``busy`` gives roughly a hundred small blobs at 720p, the sparse setting
    about a third as many larger ones.
    """
    sigma, thr = (6.0, 2.5) if busy else (10.0, 2.6)
    n = ndimage.gaussian_filter(np.random.default_rng(seed).standard_normal((height, width)), sigma)
    return (n > thr * n.std()).astype(np.uint8)


def labels_needed(mask: np.ndarray, stripes: int) -> int:
    """Largest number of first-pass labels any stripe allocates on ``mask``.

    A pixel takes a fresh label when it is white and none of its four
    already-visited neighbours inside the same stripe is.
    """
    h = mask.shape[0]
    hs = -(-h // stripes)
    worst = 1
    for s in range(stripes):
        b = mask[s * hs:(s + 1) * hs] != 0
        p = np.pad(b, ((1, 0), (1, 1)))
        seen = p[1:, :-2] | p[:-1, :-2] | p[:-1, 1:-1] | p[:-1, 2:]
        worst = max(worst, int((b & ~seen).sum()))
    return worst


def _crop_rows(width, height, reps, seed, variants):
    obj = min(128, width // 2, height // 2)
    rng = np.random.default_rng(seed)
    frame = rng.integers(0, 256, (height, width), dtype=np.uint8)
    t, l = (height - obj) // 2, (width - obj) // 2
    bbox = (t, l, t + obj - 1, l + obj - 1)
    ps = f"obj={obj}x{obj}"
    fns = {
        "oblivious": lambda: crop_object(frame, bbox, obj, obj),
        "naive-oblivious": lambda: naive_crop(frame, bbox, obj, obj),
        "non-oblivious": lambda: frame[t:t + obj, l:l + obj].copy(),
    }
    for v in variants:
        yield BenchRow("crop", v, width, height, ps, time_median(fns[v], reps), reps)


def _bbox_rows(width, height, reps, seed, variants, workers):
    for busy in (True, False):
        mask = scene_mask(width, height, seed, busy)
        scene = "busy" if busy else "sparse"
        if "oblivious" in variants:
            for stripes in (1, 8):
                n = labels_needed(mask, stripes)
                for w in (workers if stripes > 1 else (1,)):
                    ms = time_median(lambda: detect_bboxes_striped(mask, n, stripes, None, w), reps)
                    yield BenchRow("bbox", "oblivious", width, height,
                                   f"scene={scene};stripes={stripes};labels={n};workers={w}", ms, reps)
        if "non-oblivious" in variants:
            yield BenchRow("bbox", "non-oblivious", width, height, f"scene={scene}",
                           time_median(lambda: reference_boxes(mask), reps), reps)
    if "naive-oblivious" in variants:
        # naive labelling is O(pixels^2); compare both at a small size instead
        side = NAIVE_BBOX_SIDE
        small = scene_mask(side, side, seed, True)
        n = labels_needed(small, 1)
        ps = f"scene=busy;stripes=1;labels={n};workers=1"
        yield BenchRow("bbox", "naive-oblivious", side, side, ps,
                       time_median(lambda: naive_detect_bboxes(small, n), reps), reps)
        yield BenchRow("bbox", "oblivious", side, side, ps,
                       time_median(lambda: detect_bboxes_striped(small, n, 1), reps), reps)


def _decode_rows(width, height, reps, seed, variants, quant):
    frame = synth_video("two-blobs", 1, width, height, seed).frames[:1]
    row = encode_stream(frame, quant)
    ps = f"quant={quant};frames=1"
    if "oblivious" in variants:
        yield BenchRow("decode", "oblivious", width, height, ps + ";unit=row",
                       time_median(lambda: decode_stream(row), reps), reps)
    if "naive-oblivious" in variants:
        whole = encode_stream(frame, quant, frame_level=True)
        yield BenchRow("decode", "naive-oblivious", width, height, ps + ";unit=frame",
                       time_median(lambda: decode_stream(whole), reps), reps)
    if "non-oblivious" in variants:
        yield BenchRow("decode", "non-oblivious", width, height, ps + ";unit=row",
                       time_median(lambda: plain_decode_stream(row), reps), reps)


def bench(stages: Iterable[str] = STAGES, variants: Iterable[str] = VARIANTS, reps: int = 20,
          width: int = 1280, height: int = 720, seed: int = 0, quant: int = 8,
          workers: Iterable[int] = (1, 2, 4, 8)) -> list[BenchRow]:
    """Benchmark rows for ``stages``; only the stripe sweep uses more than one worker."""
    stages, variants, workers = tuple(stages), tuple(variants), tuple(workers)
    for s in stages:
        if s not in STAGES:
            raise ValueError(f"unknown stage {s!r}; choose from {', '.join(STAGES)}")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rows: list[BenchRow] = []
    for s in stages:
        if s == "crop":
            rows += _crop_rows(width, height, reps, seed, variants)
        elif s == "bbox":
            rows += _bbox_rows(width, height, reps, seed, variants, workers)
        else:
            rows += _decode_rows(width, height, reps, seed, variants, quant)
    return rows


def write_csv(rows: Iterable[BenchRow], out: TextIO) -> None:
    w = csv.DictWriter(out, CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        d = asdict(r)
        d["median_ms"] = f"{r.median_ms:.3f}"
        w.writerow(d)


def find(rows: Iterable[BenchRow], stage: str, variant: str, **params) -> BenchRow:
    """The single row of ``stage``/``variant`` whose param_set contains every ``k=v``."""
    want = {f"{k}={v}" for k, v in params.items()}
    hits = [r for r in rows if r.stage == stage and r.variant == variant
            and want <= set(r.param_set.split(";"))]
    if len(hits) != 1:
        raise LookupError(f"{len(hits)} rows match {stage}/{variant}/{params}")
    return hits[0]


def speedups(rows: list[BenchRow], width: int = 1280, height: int = 720) -> dict[str, float]:
    """The three headline ratios: optimized over naive crop, 1 over 8 stripes, frame over row decode."""
    big = [r for r in rows if (r.width, r.height) == (width, height)]
    out = {}
    try:
        out["crop"] = (find(big, "crop", "naive-oblivious").median_ms
                       / find(big, "crop", "oblivious").median_ms)
    except LookupError:
        pass
    try:
        out["bbox_stripes"] = (
            find(big, "bbox", "oblivious", scene="busy", stripes=1).median_ms
            / find(big, "bbox", "oblivious", scene="busy", stripes=8, workers=1).median_ms)
    except LookupError:
        pass
    try:
        out["decode_rows"] = (find(big, "decode", "naive-oblivious").median_ms
                              / find(big, "decode", "oblivious").median_ms)
    except LookupError:
        pass
    return out
