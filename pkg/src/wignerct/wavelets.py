"""Orthonormal periodized Daubechies wavelet transforms in one and two dimensions."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import comb


@lru_cache(maxsize=None)
def daubechies_filter(order: int) -> np.ndarray:
    """Minimum-phase scaling filter with ``order`` vanishing moments (``2*order`` taps, sum sqrt 2).

    Spectral factorisation: ``|H(w)|^2 = cos^{2N}(w/2) P(sin^2(w/2))`` with
    ``P(y) = sum_k C(N-1+k, k) y^k``; each root ``y`` of ``P`` contributes the
    root ``z`` of ``z^2 - (2 - 4y) z + 1`` that lies inside the unit circle.
    """
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise ValueError(f"Daubechies order must be a positive integer, got {order!r}")
    if order > 20:
        raise ValueError("orders above 20 are numerically unreliable")
    poly = np.array([comb(order - 1 + k, k, exact=True) for k in range(order)], dtype=float)
    h = np.array([1.0])
    for _ in range(order):
        h = np.convolve(h, [1.0, 1.0])
    if order > 1:
        for y in np.roots(poly[::-1]):
            zs = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
            z = zs[np.argmin(np.abs(zs))]
            h = np.convolve(h, [1.0, -z])
        # complex roots come in conjugate pairs so the product is real
        h = np.real(h)
    h = h[::-1] if abs(h[0]) < abs(h[-1]) else h
    return h * (math.sqrt(2.0) / h.sum())


def wavelet_filter(h: np.ndarray) -> np.ndarray:
    n = h.size
    return np.array([(-1) ** k * h[n - 1 - k] for k in range(n)])


@lru_cache(maxsize=None)
def _level_matrix(order: int, length: int) -> np.ndarray:
    """Orthogonal ``length x length`` single-level analysis: approximations on top, details below."""
    if length < 2 or length % 2:
        raise ValueError(f"signal length at each level must be even and >= 2, got {length}")
    h = daubechies_filter(order)
    g = wavelet_filter(h)
    half = length // 2
    mat = np.zeros((length, length))
    for k in range(half):
        for n in range(h.size):
            col = (2 * k + n) % length
            mat[k, col] += h[n]
            mat[half + k, col] += g[n]
    mat.setflags(write=False)
    return mat


def _check_levels(length: int, levels: int) -> None:
    if not isinstance(levels, (int, np.integer)) or levels < 1:
        raise ValueError(f"levels must be a positive integer, got {levels!r}")
    if length % (1 << levels):
        raise ValueError(f"length {length} is not divisible by 2^{levels}")


def dwt(x, order: int = 4, levels: int = 3) -> np.ndarray:
    """Multi-level transform; output layout ``[a_L, d_L, d_{L-1}, ..., d_1]``."""
    out = np.array(x, dtype=float)
    _check_levels(out.size, levels)
    n = out.size
    for _ in range(levels):
        out[:n] = _level_matrix(order, n) @ out[:n]
        n //= 2
    return out


def idwt(c, order: int = 4, levels: int = 3) -> np.ndarray:
    out = np.array(c, dtype=float)
    _check_levels(out.size, levels)
    n = out.size >> (levels - 1)
    for _ in range(levels):
        out[:n] = _level_matrix(order, n).T @ out[:n]
        n *= 2
    return out


def dwt2(x, order: int = 4, levels: int = 3) -> np.ndarray:
    """Separable (rows then columns at each level) square 2-D transform."""
    out = np.array(x, dtype=float)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise ValueError("dwt2 expects a square array")
    _check_levels(out.shape[0], levels)
    n = out.shape[0]
    for _ in range(levels):
        mat = _level_matrix(order, n)
        out[:n, :n] = mat @ out[:n, :n] @ mat.T
        n //= 2
    return out


def idwt2(c, order: int = 4, levels: int = 3) -> np.ndarray:
    out = np.array(c, dtype=float)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise ValueError("idwt2 expects a square array")
    _check_levels(out.shape[0], levels)
    n = out.shape[0] >> (levels - 1)
    for _ in range(levels):
        mat = _level_matrix(order, n)
        out[:n, :n] = mat.T @ out[:n, :n] @ mat
        n *= 2
    return out
