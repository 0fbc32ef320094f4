"""Pipeline configuration: the public bounds plus codec and channel settings.

Loaded from JSON (``OBLIVID_CONFIG`` names the default file) with keyword
overrides; every bound is validated before any frame is touched.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

ENV_VAR = "OBLIVID_CONFIG"
VARIANTS = ("classifier", "detector")


class ConfigError(ValueError):
    """A configuration value violates its bound; the message names the field."""


@dataclass(frozen=True)
class PipelineConfig:
    # frame and codec
    width: int = 128
    height: int = 128
    quant: int = 8                     # coarse enough to drop sensor noise
    bits_bound: int | None = None      # None: smallest bound fitting the input
    n_chunk: int | None = None         # None: the content-independent default
    keyframe_only: bool = True
    radius: int = 1
    frame_level: bool = False
    # background subtraction
    m_max: int = 4
    b_components: int = 3
    alpha: float = 0.005
    warmup_frames: int = 0
    # bounding boxes
    max_labels: int = 64               # N across all stripes
    stripes: int = 1
    workers: int = 1
    min_box_pixels: int = 4            # smaller blobs are treated as noise
    # objects and channel
    max_objects: int = 5               # k_max
    obj_width: int = 32                # P
    obj_height: int = 32               # Q
    buffer_size: int = 50              # C
    k_prime: int = 4
    # features (detector-style pipeline)
    n_temp: int = 128
    n_features: int = 32
    variant: str = "classifier"
    seed: int = 0
    cache_line_bytes: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, name: str, msg: str):
            if not ok:
                raise ConfigError(f"{name}: {msg} (got {getattr(self, name)!r})")

        for f in ("width", "height", "quant", "m_max", "b_components", "max_labels", "stripes",
                  "workers", "max_objects", "obj_width", "obj_height", "buffer_size",
                  "n_temp", "n_features", "cache_line_bytes"):
            v = getattr(self, f)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, f, "must be an integer >= 1")
        need(self.width % 4 == 0, "width", "must be a multiple of 4")
        need(self.height % 4 == 0, "height", "must be a multiple of 4")
        need(self.k_prime >= 0, "k_prime", "must be >= 0")
        need(self.k_prime <= self.buffer_size, "k_prime", "must not exceed buffer_size")
        need(self.max_objects <= self.buffer_size, "max_objects", "must not exceed buffer_size")
        need(self.max_labels <= self.width * self.height, "max_labels", "must not exceed the pixel count")
        need(self.max_labels % self.stripes == 0, "max_labels", "must be divisible by stripes")
        need(self.stripes <= self.height, "stripes", "must not exceed the frame height")
        need(self.obj_width <= self.width, "obj_width", "must not exceed the frame width")
        need(self.obj_height <= self.height, "obj_height", "must not exceed the frame height")
        need(self.b_components <= self.m_max, "b_components", "must not exceed m_max")
        need(self.n_features <= self.n_temp, "n_features", "must not exceed n_temp")
        need(0 < self.alpha < 1, "alpha", "must lie in (0, 1)")
        need(0 <= self.radius <= 255, "radius", "must lie in 0..255")
        need(self.warmup_frames >= 0, "warmup_frames", "must be >= 0")
        need(self.min_box_pixels >= 1, "min_box_pixels", "must be >= 1")
        need(self.variant in VARIANTS, "variant", f"must be one of {VARIANTS}")
        need(self.bits_bound is None or (self.bits_bound >= 16 and self.bits_bound % 16 == 0),
             "bits_bound", "must be a positive multiple of 16")
        need(self.n_chunk is None or 1 <= self.n_chunk <= 255, "n_chunk", "must lie in 1..255")
        if self.variant == "detector":
            need(min(self.width, self.height) >= 16, "width", "detector variant needs frames >= 16x16")

    @property
    def labels_per_stripe(self) -> int:
        return self.max_labels // self.stripes

    def with_(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        bad = sorted(set(d) - known)
        if bad:
            raise ConfigError(f"unknown config field(s): {', '.join(bad)}")
        return cls(**d)


def load_config(path: str | os.PathLike | None = None, **overrides) -> PipelineConfig:
    """JSON file (or ``$OBLIVID_CONFIG``, or defaults) updated by non-None overrides."""
    path = path or os.environ.get(ENV_VAR)
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(data)
