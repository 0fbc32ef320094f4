"""4x4 integer Walsh-Hadamard transform and uniform quantization.

``H @ H.T == 4 I``, so ``H.T (H X H.T) H == 16 X`` and the inverse
``(H.T C H + 8) >> 4`` is exact for unquantized coefficients.  With step
``q`` each dequantized coefficient is off by at most ``q/2``; summing sixteen
of them and dividing by 16 bounds every reconstructed sample by
``ceil(q / 2)`` (see :func:`error_bound`).
"""
from __future__ import annotations

import numpy as np
from numba import njit

H = np.array([[1, 1, 1, 1],
              [1, 1, -1, -1],
              [1, -1, -1, 1],
              [1, -1, 1, -1]], np.int64)

ZIGZAG = np.array([0, 1, 4, 8, 5, 2, 3, 6, 9, 12, 13, 10, 7, 11, 14, 15], np.int64)


def forward(block: np.ndarray) -> np.ndarray:
    return H @ np.asarray(block, np.int64) @ H.T


def inverse(coeffs: np.ndarray) -> np.ndarray:
    return (H.T @ np.asarray(coeffs, np.int64) @ H + 8) >> 4


def quantize(coeffs: np.ndarray, q: int) -> np.ndarray:
    """Round half away from zero."""
    c = np.asarray(coeffs, np.int64)
    return np.sign(c) * ((np.abs(c) + q // 2) // q) if q > 1 else c.copy()


def dequantize(levels: np.ndarray, q: int) -> np.ndarray:
    return np.asarray(levels, np.int64) * q


def error_bound(q: int) -> int:
    return 0 if q == 1 else (q + 1) // 2


def dequant_inverse_transform(levels: np.ndarray, q: int) -> np.ndarray:
    """Residue block from quantized levels; the same arithmetic for any input."""
    return inverse(dequantize(levels, q))


@njit(cache=True)
def dequant_inverse_kernel(levels, q, out):
    """``levels``: 16 raster-ordered quantized coefficients -> 4x4 residue in ``out``."""
    t = np.empty((4, 4), np.int64)
    # t = H.T @ C
    for i in range(4):
        for j in range(4):
            s = 0
            for k in range(4):
                s += H[k, i] * levels[k * 4 + j] * q
            t[i, j] = s
    for i in range(4):
        for j in range(4):
            s = 0
            for k in range(4):
                s += t[i, k] * H[k, j]
            out[i, j] = (s + 8) >> 4
