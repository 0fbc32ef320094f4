"""Scripted test videos with known ground-truth boxes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCENARIOS = ("moving-square", "two-blobs", "static")
Box = tuple[int, int, int, int]      # top, left, bottom, right (inclusive)


@dataclass
class SynthVideo:
    frames: list[np.ndarray]
    truth: list[list[Box]]           # per frame, sorted by (top, left)


def _noisy_bg(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return (40 + 20 * (xx / max(w - 1, 1)) + 10 * (yy / max(h - 1, 1))).astype(np.float64)


def synth_video(scenario: str = "moving-square", frames: int = 100, width: int = 128,
                height: int = 128, seed: int = 0, size: int = 16, noise: float = 2.0,
                lead_in: int = 0) -> SynthVideo:
    """``moving-square`` translates one bright square 1 px/frame along x, wrapping
    so it stays whole; ``two-blobs`` moves two squares on disjoint rows in
    opposite directions; ``static`` repeats one frame.

    The first ``lead_in`` frames show only the background, giving a background
    model time to settle before anything moves; motion starts after them.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if lead_in < 0:
        raise ValueError("lead_in must be >= 0")
    if frames < 1 or size < 1 or size * 2 + 4 > min(width, height):
        raise ValueError("frames must be >= 1 and the frame must fit two squares")
    rng = np.random.default_rng(seed)
    bg = _noisy_bg(rng, height, width)
    span = width - size + 1
    out, truth = [], []
    start = int(rng.integers(0, span))
    y0 = (height - size) // 2
    for f in range(frames):
        img = bg.copy()
        boxes: list[Box] = []
        if f < lead_in and scenario != "static":
            pass
        elif scenario == "moving-square":
            x = (start + f - lead_in) % span
            boxes.append((y0, x, y0 + size - 1, x + size - 1))
        elif scenario == "two-blobs":
            ya, yb = height // 4 - size // 2, 3 * height // 4 - size // 2
            xa = (start + f - lead_in) % span
            xb = span - 1 - xa
            boxes += [(ya, xa, ya + size - 1, xa + size - 1), (yb, xb, yb + size - 1, xb + size - 1)]
        for t, l, b, r in boxes:
            img[t:b + 1, l:r + 1] = 220
        if scenario == "static" and f > 0:
            out.append(out[0].copy())
        else:
            img += rng.normal(0, noise, img.shape)
            out.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
        truth.append(sorted(boxes))
    return SynthVideo(out, truth)
