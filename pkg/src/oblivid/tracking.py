"""Oblivious keypoint detection and brute-force matching.

Detection builds a one-octave difference-of-Gaussians stack, then visits every
interior pixel of every DoG level.  A pixel's candidate record is computed
unconditionally and written into a fixed list of ``n_temp`` slots by a masked
scan, so extrema never change which memory is touched.  Weak candidates are
nulled, an oblivious sort packs survivors at the head, and the first ``n``
slots get a 4x4x8 orientation histogram over a 16x16 neighbourhood fetched
with :func:`oblivid.vision.crop.crop_object`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _nb
from .core import OP_OSORT, ContractViolation, next_pow2
from .trace import TraceRecorder, kernel_args, op_id
from .vision.crop import ObjectImage, crop_object

OP_BLUR = op_id("features.blur")
OP_NBRS = op_id("features.nbrs")
OP_CAND = op_id("features.cand")
OP_HIST = op_id("features.hist")
OP_MATCH = op_id("features.match")

SIGMAS = (1.6, 2.26, 3.2, 4.53)
TRUNCATE = 4.0
CONTRAST = 0.03          # fraction of the 0..255 dynamic range
EDGE_RATIO = 10.0
PATCH = 16
CELLS = 4
BINS = 8
DESC_LEN = CELLS * CELLS * BINS
NULL = -1                # canonical null coordinate

# candidate record columns
C_VALID, C_Y, C_X, C_S, C_D, C_DXX, C_DYY, C_DXY = range(8)
C_FIELDS = 8


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    scale: int
    valid: bool


@dataclass(frozen=True)
class FeatureDescriptor:
    histogram: np.ndarray
    owner: Keypoint


@dataclass
class FeatureSet:
    """``n`` slots: coordinates ``(y, x, scale)``, validity and descriptors."""
    coords: np.ndarray       # (n, 3) int64, NULL where invalid
    valid: np.ndarray        # (n,) bool
    desc: np.ndarray         # (n, DESC_LEN) float64

    def __len__(self) -> int:
        return len(self.valid)

    def __getitem__(self, i: int) -> FeatureDescriptor:
        y, x, s = (int(v) for v in self.coords[i])
        return FeatureDescriptor(self.desc[i], Keypoint(x, y, s, bool(self.valid[i])))

    def keypoints(self) -> list[Keypoint]:
        return [self[i].owner for i in range(len(self)) if self.valid[i]]


@dataclass
class Matches:
    index: np.ndarray        # (n,) int64 into the second set, NULL when unmatched
    distance: np.ndarray     # (n,) float64, inf when unmatched


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Same taps as ``scipy.ndimage.gaussian_filter1d`` with the default truncation."""
    r = int(TRUNCATE * sigma + 0.5)
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


@njit(cache=True)
def _conv_rows(src, k, dst):
    h, w = src.shape
    r = k.shape[0] // 2
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for t in range(k.shape[0]):
                xx = min(max(x + t - r, 0), w - 1)
                acc += k[t] * src[y, xx]
            dst[y, x] = acc


def _blur(img: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    tmp = np.empty_like(img)
    _conv_rows(img, k, tmp)
    out = np.empty_like(img.T)
    _conv_rows(np.ascontiguousarray(tmp.T), k, out)
    return np.ascontiguousarray(out.T)


def dog_stack(img: np.ndarray, rec: TraceRecorder | None = None):
    """Gaussian levels ``(len(SIGMAS), h, w)`` and their differences."""
    img = np.asarray(img, np.float64)
    gauss = np.stack([_blur(img, s) for s in SIGMAS])
    if rec is not None:
        for _ in SIGMAS:
            rec.scan(OP_BLUR, "features.img", 0, img.size, 8)
            rec.scan(OP_BLUR, "features.gauss", 0, img.size, 8)
    return gauss, np.ascontiguousarray(gauss[1:] - gauss[:-1])


@njit(cache=True)
def candidate_kernel(dog, cand, tb, ts, dog_id, cand_id):
    """Masked insertion of every extremum into the fixed candidate list."""
    ns, h, w = dog.shape
    n_temp = cand.shape[0]
    ctr = np.int64(0)
    rec = np.empty(C_FIELDS, np.float64)
    for s in range(ns):
        lo = max(s - 1, 0)
        hi = min(s + 1, ns - 1)
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                if ts[1]:
                    for ss in range(lo, hi + 1):
                        for yy in range(y - 1, y + 2):
                            base = (ss * h + yy) * w
                            _nb.scan(tb, ts, OP_NBRS, dog_id, base + x - 1, base + x + 2, 8)
                v = dog[s, y, x]
                is_max = np.int64(1)
                is_min = np.int64(1)
                for ss in range(lo, hi + 1):
                    for yy in range(y - 1, y + 2):
                        for xx in range(x - 1, x + 2):
                            u = dog[ss, yy, xx]
                            centre = np.int64((ss == s) & (yy == y) & (xx == x))
                            is_max &= centre | np.int64(v > u)
                            is_min &= centre | np.int64(v < u)
                ext = (is_max | is_min) & np.int64(ctr < n_temp)
                rec[C_VALID] = 1.0
                rec[C_Y] = y
                rec[C_X] = x
                rec[C_S] = s
                rec[C_D] = v
                rec[C_DXX] = dog[s, y, x + 1] + dog[s, y, x - 1] - 2.0 * v
                rec[C_DYY] = dog[s, y + 1, x] + dog[s, y - 1, x] - 2.0 * v
                rec[C_DXY] = 0.25 * (dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1]
                                     - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1])
                if ts[1]:
                    _nb.scan(tb, ts, OP_CAND, cand_id, 0, n_temp, C_FIELDS * 8)
                for i in range(n_temp):
                    hit = ext & np.int64(i == ctr)
                    for f in range(C_FIELDS):
                        cand[i, f] = _nb.fsel(hit, rec[f], cand[i, f])
                ctr = _nb.sel(ext, ctr + 1, ctr)
    return ctr


@njit(cache=True)
def robustness_kernel(cand, contrast, edge, tb, ts, cand_id):
    """Null candidates with low contrast or an edge-like Hessian."""
    lim = (edge + 1.0) ** 2 / edge
    if ts[1]:
        _nb.scan(tb, ts, OP_CAND, cand_id, 0, cand.shape[0], C_FIELDS * 8)
    for i in range(cand.shape[0]):
        tr = cand[i, C_DXX] + cand[i, C_DYY]
        det = cand[i, C_DXX] * cand[i, C_DYY] - cand[i, C_DXY] ** 2
        ok = np.int64(cand[i, C_VALID] > 0.0) & np.int64(abs(cand[i, C_D]) >= contrast)
        ok &= np.int64(det > 0.0) & np.int64(tr * tr < lim * det)
        cand[i, C_VALID] = _nb.fsel(ok, 1.0, 0.0)


@njit(cache=True)
def row_sort_kernel(rows, key, tb, ts, arr):
    """Bitonic sort of ``rows`` (power-of-two count) by ascending ``key``."""
    n = rows.shape[0]
    nf = rows.shape[1]
    k = 2
    while k <= n:
        j = k // 2
        while j > 0:
            for i in range(n):
                l = i ^ j
                if l > i:
                    if ts[1]:
                        _nb.touch(tb, ts, OP_OSORT, arr, i, nf * 8)
                        _nb.touch(tb, ts, OP_OSORT, arr, l, nf * 8)
                    up = (i & k) == 0
                    sw = (key[i] > key[l]) == up
                    a = key[i]
                    b = key[l]
                    key[i] = _nb.sel(sw, b, a)
                    key[l] = _nb.sel(sw, a, b)
                    for f in range(nf):
                        a2 = rows[i, f]
                        b2 = rows[l, f]
                        rows[i, f] = _nb.fsel(sw, b2, a2)
                        rows[l, f] = _nb.fsel(sw, a2, b2)
            j //= 2
        k *= 2


@njit(cache=True)
def histogram_kernel(patch, cy, cx, valid, out, tb, ts, hist_id):
    """4x4 cells x 8 orientation bins of gradient magnitude, L2-normalized.

    Bin selection is a masked add over all bins; ``valid == 0`` zeroes the result.
    """
    n = patch.shape[0]
    for k in range(out.shape[0]):
        out[k] = 0.0
    sig = 0.5 * n
    for y in range(n):
        for x in range(n):
            gx = patch[y, min(x + 1, n - 1)] - patch[y, max(x - 1, 0)]
            gy = patch[min(y + 1, n - 1), x] - patch[max(y - 1, 0), x]
            mag = np.sqrt(gx * gx + gy * gy)
            dy = y - cy
            dx = x - cx
            mag *= np.exp(-(dx * dx + dy * dy) / (2.0 * sig * sig))
            ang = np.arctan2(gy, gx)
            b = np.int64(np.floor((ang + np.pi) * BINS / (2.0 * np.pi))) % BINS
            cell = (y * CELLS // n) * CELLS + (x * CELLS // n)
            if ts[1]:
                _nb.scan(tb, ts, OP_HIST, hist_id, cell * BINS, cell * BINS + BINS, 8)
            for k in range(BINS):
                out[cell * BINS + k] += _nb.fsel(k == b, mag, 0.0)
    s = 0.0
    for k in range(out.shape[0]):
        s += out[k] * out[k]
    inv = _nb.fsel(valid, 1.0 / np.sqrt(max(s, 1e-24)), 0.0)
    for k in range(out.shape[0]):
        out[k] *= inv


def _image(img) -> np.ndarray:
    if isinstance(img, ObjectImage):
        img = img.pixels
    img = np.asarray(img)
    if img.ndim != 2:
        raise ContractViolation("feature detection needs a 2-D grayscale image")
    return img


def detect_features(img, n_temp: int = 128, n: int = 32,
                    rec: TraceRecorder | None = None) -> FeatureSet:
    """Up to ``n`` keypoints with descriptors; the trace depends on shape, ``n_temp``, ``n``."""
    img = _image(img)
    h, w = img.shape
    if not 1 <= n <= n_temp:
        raise ContractViolation(f"need 1 <= n ({n}) <= n_temp ({n_temp})")
    if h < PATCH or w < PATCH:
        raise ContractViolation(f"image {w}x{h} smaller than the {PATCH}x{PATCH} patch")
    gauss, dog = dog_stack(img, rec)
    tb, ts = kernel_args(rec)
    ids = [rec.array_id(k) if rec is not None else 0
           for k in ("features.dog", "features.cand", "features.hist")]
    size = next_pow2(n_temp)
    cand = np.zeros((size, C_FIELDS), np.float64)
    candidate_kernel(dog, cand[:n_temp], tb, ts, ids[0], ids[1])
    robustness_kernel(cand[:n_temp], CONTRAST * 255.0, EDGE_RATIO, tb, ts, ids[1])
    # valid first, then original order
    key = np.where(cand[:, C_VALID] > 0, 0, 1) * size + np.arange(size, dtype=np.int64)
    row_sort_kernel(cand, key.astype(np.int64), tb, ts, ids[1])

    coords = np.full((n, 3), NULL, np.int64)
    valid = np.zeros(n, bool)
    desc = np.zeros((n, DESC_LEN), np.float64)
    half = PATCH // 2
    for i in range(n):
        # Python ints below come from the candidate record, but every step
        # after them has a fixed trace: crop is oblivious, selection is masked.
        ok = int(cand[i, C_VALID] > 0)
        y = int(cand[i, C_Y]) * ok
        x = int(cand[i, C_X]) * ok
        s = int(cand[i, C_S]) * ok
        t = min(max(y - half, 0), h - PATCH)
        l = min(max(x - half, 0), w - PATCH)
        patch = np.zeros((PATCH, PATCH), np.float64)
        for lev in range(dog.shape[0]):
            got = crop_object(gauss[lev], (t, l, t + PATCH - 1, l + PATCH - 1),
                              PATCH, PATCH, rec).pixels
            m = np.float64(lev == s)
            patch = m * got + (1.0 - m) * patch
        histogram_kernel(patch, float(y - t), float(x - l), ok, desc[i], tb, ts, ids[2])
        coords[i] = np.where(ok, (y, x, s), NULL)
        valid[i] = bool(ok)
    return FeatureSet(coords, valid, desc)


@njit(cache=True)
def match_kernel(a, av, b, bv, idx, dist, tb, ts, b_id):
    n = a.shape[0]
    for i in range(n):
        best = np.inf
        bi = np.int64(NULL)
        if ts[1]:
            _nb.scan(tb, ts, OP_MATCH, b_id, 0, b.shape[0], b.shape[1] * 8)
        for j in range(b.shape[0]):
            d = 0.0
            for k in range(a.shape[1]):
                t = a[i, k] - b[j, k]
                d += t * t
            d = _nb.fsel(bv[j] & av[i], np.sqrt(d), np.inf)
            better = d < best
            best = _nb.fsel(better, d, best)
            bi = _nb.sel(better, j, bi)
        idx[i] = bi
        dist[i] = best


def match_features(a: FeatureSet, b: FeatureSet, rec: TraceRecorder | None = None) -> Matches:
    """Nearest ``b`` descriptor (L2) for every ``a`` slot; ties go to the lower index."""
    if a.desc.shape[1] != b.desc.shape[1]:
        raise ContractViolation("descriptor lengths differ")
    tb, ts = kernel_args(rec)
    n = len(a)
    idx = np.empty(n, np.int64)
    dist = np.empty(n, np.float64)
    bid = rec.array_id("features.b") if rec is not None else 0
    match_kernel(np.ascontiguousarray(a.desc), a.valid.astype(np.int64),
                 np.ascontiguousarray(b.desc), b.valid.astype(np.int64), idx, dist, tb, ts, bid)
    return Matches(idx, dist)


# -- non-oblivious references ---------------------------------------------------

def reference_keypoints(img, n_temp: int = 128) -> list[tuple[int, int, int]]:
    """Branchy detector over the same DoG stack built with scipy's Gaussian filter."""
    from scipy.ndimage import gaussian_filter

    img = np.asarray(_image(img), np.float64)
    g = np.stack([gaussian_filter(img, s, mode="nearest", truncate=TRUNCATE) for s in SIGMAS])
    d = g[1:] - g[:-1]
    ns, h, w = d.shape
    found = []
    seen = 0
    lim = (EDGE_RATIO + 1.0) ** 2 / EDGE_RATIO
    for s in range(ns):
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                cube = d[max(s - 1, 0): s + 2, y - 1: y + 2, x - 1: x + 2].ravel()
                v = d[s, y, x]
                mask = np.ones(cube.shape, bool)
                mask[(min(s, 1)) * 9 + 4] = False
                others = cube[mask]
                if not (np.all(v > others) or np.all(v < others)):
                    continue
                seen += 1
                if seen > n_temp:       # candidate list full: extremum dropped
                    continue
                dxx = d[s, y, x + 1] + d[s, y, x - 1] - 2 * v
                dyy = d[s, y + 1, x] + d[s, y - 1, x] - 2 * v
                dxy = 0.25 * (d[s, y + 1, x + 1] - d[s, y + 1, x - 1]
                              - d[s, y - 1, x + 1] + d[s, y - 1, x - 1])
                tr, det = dxx + dyy, dxx * dyy - dxy * dxy
                if abs(v) >= CONTRAST * 255.0 and det > 0 and tr * tr < lim * det:
                    found.append((y, x, s))
    return found


def reference_match(a: np.ndarray, av: np.ndarray, b: np.ndarray, bv: np.ndarray):
    """Exhaustive float matching with the same tie and dummy rules."""
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    d[:, ~bv] = np.inf
    d[~av, :] = np.inf
    idx = np.where(np.isfinite(d.min(1)), d.argmin(1), NULL)
    return idx, d.min(1)
