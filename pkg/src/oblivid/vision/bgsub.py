"""Oblivious mixture-of-Gaussians background subtraction.

Every pixel owns exactly ``m_max`` component slots; a slot with weight 0 is a
dummy.  Per pixel the kernel always runs the same steps on all slots:

1. recursive update of every slot (dummies get masked no-op updates),
2. a fixed sorting network orders slots by weight, heaviest first,
3. the background decision over the first ``b`` slots (a pixel whose
   mixture was empty takes its first sample as background),
4. unconditional construction of a fresh component, blended into the last
   slot when nothing matched, then one bubble pass and renormalization.

The update is the recursive one used by adaptive GMM background models:
``w += alpha * (owns - w) - alpha * c_t``; the owning (first close) slot also
moves its mean and variance with rate ``alpha / w``.  A pixel is background
when the matched weight among the leading components (those before the
cumulative weight reaches ``c_f``) exceeds ``c_thr``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .. import _nb
from ..core import ContractViolation, OP_OSORT
from ..trace import TraceRecorder, kernel_args, op_id

OP_BG_READ = op_id("bg.read")
OP_BG_WRITE = op_id("bg.write")
OP_BG_PIX = op_id("bg.pixel")
OP_BG_MASK = op_id("bg.mask")


@dataclass(frozen=True)
class BgParams:
    alpha: float = 0.005
    delta_thr: float = 3.0       # match / decision radius in std-devs
    c_f: float = 0.9             # cumulative weight of the background set
    c_thr: float = 0.5           # matched-weight threshold for background
    b: int = 3                   # components considered for the decision
    m_max: int = 4
    c_t: float = 0.05            # complexity prior pulling weights down
    var_init: float = 15.0
    var_min: float = 4.0
    var_max: float = 75.0
    bootstrap: bool = True       # faster learning over the first frames

    def __post_init__(self):
        if self.m_max < 1 or not 1 <= self.b <= self.m_max:
            raise ValueError("need 1 <= b <= m_max")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")

    def rate(self, t: int) -> float:
        """Learning rate for frame ``t`` (0-based): ``max(alpha, 1 / (2 (t + 1)))``.

        The schedule depends on the frame index alone, which is public.
        """
        return max(self.alpha, 0.5 / (t + 1)) if self.bootstrap else self.alpha

    def vector(self, t: int | None = None) -> np.ndarray:
        a = self.alpha if t is None else self.rate(t)
        return np.array([a, self.delta_thr ** 2, self.c_f, self.c_thr, self.c_t,
                         self.var_init, self.var_min, self.var_max], np.float64)


@dataclass
class PixelMixture:
    """Fixed-capacity component arrays for one pixel."""
    mean: np.ndarray
    var: np.ndarray
    weight: np.ndarray

    @classmethod
    def empty(cls, m_max: int = 4) -> "PixelMixture":
        return cls(np.zeros(m_max), np.zeros(m_max), np.zeros(m_max))

    @property
    def live(self) -> int:
        return int((self.weight > 0).sum())


@dataclass
class BgState:
    """Per-pixel mixtures of a ``height x width`` stream."""
    mean: np.ndarray
    var: np.ndarray
    weight: np.ndarray
    params: BgParams = field(default_factory=BgParams)
    frame_index: int = 0

    @classmethod
    def create(cls, height: int, width: int, params: BgParams | None = None) -> "BgState":
        p = params or BgParams()
        shape = (height, width, p.m_max)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape), p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape[:2]


@njit(cache=True, inline="always")
def _fmax(a, b):
    return _nb.fsel(a > b, a, b)


@njit(cache=True, inline="always")
def _fmin(a, b):
    return _nb.fsel(a < b, a, b)


@njit(cache=True, inline="always")
def _cx(mu, var, w, i, l):
    """Compare-exchange slots i < l so the heavier one ends up at i."""
    sw = np.float64(w[l] > w[i])
    a_mu, a_var, a_w = mu[i], var[i], w[i]
    b_mu, b_var, b_w = mu[l], var[l], w[l]
    mu[i] = _nb.fsel(sw, b_mu, a_mu)
    var[i] = _nb.fsel(sw, b_var, a_var)
    w[i] = _nb.fsel(sw, b_w, a_w)
    mu[l] = _nb.fsel(sw, a_mu, b_mu)
    var[l] = _nb.fsel(sw, a_var, b_var)
    w[l] = _nb.fsel(sw, a_w, b_w)


@njit(cache=True)
def pixel_update(mu, var, w, x, prm, b, base, tb, ts, mu_id, var_id, w_id):
    """One step for one pixel; slots live at ``[base, base + m)``.  Returns foreground."""
    m = w.shape[0]
    alpha = prm[0]
    thr2 = prm[1]
    c_f = prm[2]
    c_thr = prm[3]
    c_t = prm[4]
    if ts[1]:
        _nb.scan(tb, ts, OP_BG_READ, mu_id, base, base + m, 8)
        _nb.scan(tb, ts, OP_BG_READ, var_id, base, base + m, 8)
        _nb.scan(tb, ts, OP_BG_READ, w_id, base, base + m, 8)
    # an empty mixture takes its first sample as background
    had = 0.0
    for k in range(m):
        had = _fmax(had, np.float64(w[k] > 0.0))
    # 1. update every slot
    matched = 0.0
    for k in range(m):
        alive = np.float64(w[k] > 0.0)
        d = x - mu[k]
        d2 = d * d
        close = alive * np.float64(d2 < thr2 * var[k])
        own = close * (1.0 - matched)
        matched = matched + own
        wn = w[k] + alpha * (own - w[k]) - alpha * c_t
        kk = alpha / _fmax(wn, 1e-12)
        mu_n = mu[k] + kk * d
        var_n = _fmin(_fmax(var[k] + kk * (d2 - var[k]), prm[6]), prm[7])
        mu[k] = _nb.fsel(own, mu_n, mu[k])
        var[k] = _nb.fsel(own, var_n, var[k])
        keep = alive * np.float64(wn > 0.0)
        w[k] = _nb.fsel(keep, wn, 0.0)
    # 2. weight sort (bitonic network over the m slots, descending)
    n = 1
    while n < m:
        n *= 2
    kk2 = 2
    while kk2 <= n:
        j = kk2 // 2
        while j > 0:
            for i in range(n):
                l = i ^ j
                if l > i and l < m:
                    if ts[1]:
                        _nb.touch(tb, ts, OP_OSORT, w_id, base + i, 8)
                        _nb.touch(tb, ts, OP_OSORT, w_id, base + l, 8)
                    if (i & kk2) == 0:
                        _cx(mu, var, w, i, l)
                    else:
                        _cx(mu, var, w, l, i)
            j //= 2
        kk2 *= 2
    # 3. decision over the leading slots
    c = 0.0
    p = 0.0
    for k in range(b):
        d = x - mu[k]
        hit = np.float64(w[k] > 0.0) * np.float64(d * d < thr2 * var[k])
        include = np.float64(c < c_f)
        p = p + include * hit * w[k]
        c = c + w[k]
    fg = (p <= c_thr) & (had > 0.0)
    # 4. insertion of a fresh component into the lightest slot
    any_alive = 0.0
    for k in range(m):
        any_alive = _fmax(any_alive, np.float64(w[k] > 0.0))
    ins = 1.0 - matched
    last = m - 1
    mu[last] = _nb.fsel(ins, x, mu[last])
    var[last] = _nb.fsel(ins, prm[5], var[last])
    w[last] = _nb.fsel(ins, _nb.fsel(any_alive, alpha, 1.0), w[last])
    for k in range(m - 2, -1, -1):
        _cx(mu, var, w, k, k + 1)
    tot = 0.0
    for k in range(m):
        tot += w[k]
    inv = 1.0 / _fmax(tot, 1e-300)
    for k in range(m):
        w[k] = w[k] * inv
    if ts[1]:
        _nb.scan(tb, ts, OP_BG_WRITE, mu_id, base, base + m, 8)
        _nb.scan(tb, ts, OP_BG_WRITE, var_id, base, base + m, 8)
        _nb.scan(tb, ts, OP_BG_WRITE, w_id, base, base + m, 8)
    return fg


@njit(cache=True)
def frame_kernel(mu, var, w, frame, prm, b, mask, tb, ts, ids):
    h, wd, m = mu.shape
    for y in range(h):
        for x in range(wd):
            p = y * wd + x
            if ts[1]:
                _nb.touch(tb, ts, OP_BG_PIX, ids[0], p, 1)
            fg = pixel_update(mu[y, x], var[y, x], w[y, x], np.float64(frame[y, x]), prm, b,
                              p * m, tb, ts, ids[1], ids[2], ids[3])
            if ts[1]:
                _nb.touch(tb, ts, OP_BG_MASK, ids[4], p, 1)
            mask[y, x] = _nb.sel(fg, 255, 0)


def _ids(rec: TraceRecorder | None) -> np.ndarray:
    names = ("frame", "bg.mean", "bg.var", "bg.weight", "mask")
    return np.array([rec.array_id(n) if rec else 0 for n in names], np.int64)


def bg_subtract_pixel(mix: PixelMixture, x: float, params: BgParams | None = None,
                      rec: TraceRecorder | None = None) -> bool:
    """Update ``mix`` in place with sample ``x``; True when ``x`` is foreground."""
    p = params or BgParams()
    if len(mix.weight) != p.m_max:
        raise ContractViolation(f"mixture has {len(mix.weight)} slots, expected {p.m_max}")
    tb, ts = kernel_args(rec)
    ids = _ids(rec)
    return bool(pixel_update(mix.mean, mix.var, mix.weight, float(x), p.vector(), p.b, 0,
                             tb, ts, ids[1], ids[2], ids[3]))


def bg_subtract_frame(state: BgState, frame: np.ndarray,
                      rec: TraceRecorder | None = None) -> np.ndarray:
    """Binary mask (0 background, 255 foreground) for ``frame``; updates ``state``."""
    frame = np.asarray(frame)
    if frame.shape != state.shape:
        raise ContractViolation(f"frame {frame.shape} does not match model {state.shape}")
    mask = np.empty(frame.shape, np.uint8)
    tb, ts = kernel_args(rec)
    p = state.params
    frame_kernel(state.mean, state.var, state.weight, frame, p.vector(state.frame_index), p.b,
                 mask, tb, ts, _ids(rec))
    state.frame_index += 1
    return mask


# -- reference model ------------------------------------------------------------

class ReferenceMOG:
    """Branchy variable-size implementation of the same model, used as an oracle."""

    def __init__(self, height: int, width: int, params: BgParams | None = None):
        self.p = params or BgParams()
        self.models = [[[] for _ in range(width)] for _ in range(height)]
        self.t = 0
        self.alpha = self.p.rate(0)

    def apply(self, frame: np.ndarray) -> np.ndarray:
        h, w = frame.shape
        self.alpha = self.p.rate(self.t)
        self.t += 1
        out = np.zeros((h, w), np.uint8)
        for y in range(h):
            row = self.models[y]
            for x in range(w):
                out[y, x] = 255 if self.pixel(row[x], float(frame[y, x])) else 0
        return out

    def pixel(self, comps: list, x: float) -> bool:
        p = self.p
        a = self.alpha
        had = bool(comps)
        thr2 = p.delta_thr ** 2
        owner = None
        for c in comps:   # each c is [w, mu, var]
            d = x - c[1]
            c[0] = c[0] - a * c[0] - a * p.c_t
            if owner is None and d * d < thr2 * c[2]:
                owner = c
                c[0] += a
                k = a / max(c[0], 1e-12)
                c[1] += k * d
                c[2] = min(max(c[2] + k * (d * d - c[2]), p.var_min), p.var_max)
        comps[:] = [c for c in comps if c[0] > 0]
        comps.sort(key=lambda c: -c[0])
        cum = 0.0
        prob = 0.0
        for c in comps[: p.b]:
            d = x - c[1]
            if cum < p.c_f and d * d < thr2 * c[2]:
                prob += c[0]
            cum += c[0]
        fg = prob <= p.c_thr and had
        if owner is None:
            new = [a if comps else 1.0, x, p.var_init]
            if len(comps) == p.m_max:
                comps[-1] = new
            else:
                comps.append(new)
            comps.sort(key=lambda c: -c[0])
        tot = sum(c[0] for c in comps)
        for c in comps:
            c[0] /= tot
        return fg
