"""Executable obliviousness check.

An operation is run on many private inputs that agree on their public
parameters; it passes iff every run leaves the same access trace.  Traces are
compared by digest, and on a mismatch the two offending trials are replayed
with full event retention to locate the first diverging event.
"""
from __future__ import annotations

import traceback
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .trace import TraceRecorder, first_divergence, op_id, trace_digest  # noqa: F401

# Public parameter names, one per bound a deployment must fix up front.
PUBLIC_PARAM_NAMES = (
    "width", "height",          # frame resolution
    "bits_bound",               # bits per padded row of blocks
    "n_chunk",                  # max decisions per 2-byte chunk
    "max_labels",               # N, labels for bounding-box detection
    "max_objects",              # k_max, objects per frame
    "obj_width", "obj_height",  # P, Q
    "n_temp", "n_features",     # candidate / final keypoint bounds
    "m_max", "b_components",    # mixture size and background components
    "buffer_size", "k_prime",   # channel
)


@dataclass(frozen=True)
class PublicParams:
    values: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.values.items():
            if k not in PUBLIC_PARAM_NAMES:
                raise ValueError(f"unknown public parameter {k!r}")
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"public parameter {k} must be a positive integer, got {v!r}")

    def __getitem__(self, key: str) -> int:
        return self.values[key]


@dataclass
class ObliviousnessVerdict:
    passed: bool
    trials: int
    first_divergence: tuple[int, int] | None = None   # (trial, event index)
    digest: str | None = None
    events: int = 0
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "trials": self.trials,
            "first_divergence": list(self.first_divergence) if self.first_divergence else None,
            "digest": self.digest,
            "events": self.events,
            "error": self.error,
        }


Op = Callable[[Any, TraceRecorder], Any]
InputGen = Callable[[np.random.Generator], Any]


def _run(op: Op, x: Any, line_bytes: int, keep: bool) -> TraceRecorder:
    rec = TraceRecorder(line_bytes, keep_events=keep)
    op(x, rec)
    return rec


def verify_oblivious(op: Op, input_gen: InputGen, trials: int = 20, seed: int = 0,
                     cache_line_bytes: int = 1) -> ObliviousnessVerdict:
    """Run ``op`` on ``trials`` generated inputs and compare their traces."""
    if trials < 2:
        raise ValueError("need at least two trials")
    inputs = [input_gen(np.random.default_rng([seed, t])) for t in range(trials)]
    ref: str | None = None
    n_events = 0
    for t, x in enumerate(inputs):
        try:
            rec = _run(op, x, cache_line_bytes, keep=False)
        except Exception as exc:  # the op failing is itself a verdict
            return ObliviousnessVerdict(False, trials, (t, 0), ref, n_events,
                                        f"trial {t}: {type(exc).__name__}: {exc}\n"
                                        + traceback.format_exc(limit=3))
        d = rec.digest()
        if ref is None:
            ref, n_events = d, len(rec)
            continue
        if d != ref:
            a = _run(op, inputs[0], cache_line_bytes, keep=True).trace()
            b = _run(op, x, cache_line_bytes, keep=True).trace()
            idx = first_divergence(a, b)
            return ObliviousnessVerdict(False, trials, (t, -1 if idx is None else idx),
                                        ref, n_events)
    return ObliviousnessVerdict(True, trials, None, ref, n_events)


# -- negative controls ---------------------------------------------------------
# Each of these leaks through its access pattern and must fail verification.

OP_LEAK = op_id("leaky")


def leaky_lookup(x: tuple[np.ndarray, int], rec: TraceRecorder):
    """Direct indexing: touches only the secret position."""
    buf, i = x
    rec.touch(OP_LEAK, "buf", int(i), buf.itemsize)
    return buf[i]


def leaky_early_exit_sort(buf: np.ndarray, rec: TraceRecorder):
    """Bubble sort that stops as soon as a pass makes no swap."""
    a = list(buf)
    n = len(a)
    for p in range(n):
        swapped = False
        for i in range(n - 1 - p):
            rec.touch(OP_LEAK, "buf", i, 1)
            rec.touch(OP_LEAK, "buf", i + 1, 1)
            if a[i] > a[i + 1]:
                a[i], a[i + 1] = a[i + 1], a[i]
                swapped = True
        if not swapped:
            break
    return a


def leaky_trip_count(x: tuple[np.ndarray, int], rec: TraceRecorder):
    """Loop whose iteration count is the secret value."""
    buf, k = x
    total = 0
    for i in range(int(k)):
        rec.touch(OP_LEAK, "buf", i % len(buf), buf.itemsize)
        total += int(buf[i % len(buf)])
    return total


def gen_lookup(n: int = 256):
    def gen(rng: np.random.Generator):
        return rng.integers(0, 255, n).astype(np.uint8), int(rng.integers(0, n))
    return gen


def gen_sort_input(n: int = 32):
    def gen(rng: np.random.Generator):
        return rng.integers(0, 1000, n)
    return gen


def gen_trip_count(n: int = 64):
    def gen(rng: np.random.Generator):
        return rng.integers(0, 255, n).astype(np.uint8), int(rng.integers(1, 4 * n))
    return gen
