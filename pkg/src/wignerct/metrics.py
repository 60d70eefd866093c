"""Scores for comparing reconstructions with ground truth."""

from __future__ import annotations

import math

import numpy as np

from .gaussian import GaussianParams, WignerGrid, covariance


def nrmse(grid, reference) -> float:
    """Root-mean-square difference divided by the peak-to-peak range of ``reference``."""
    a = grid.values if isinstance(grid, WignerGrid) else np.asarray(grid, dtype=float)
    b = reference.values if isinstance(reference, WignerGrid) else np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"grid shapes differ: {a.shape} vs {b.shape}")
    span = float(np.ptp(b))
    if span == 0:
        raise ValueError("reference grid is constant")
    return float(np.sqrt(np.mean((a - b) ** 2)) / span)


def gaussian_fidelity(p1: GaussianParams, p2: GaussianParams) -> float:
    """Fidelity of two single-mode Gaussian states from means and covariances.

    With vacuum covariance I/2:
    ``F = exp(-d^T (V1+V2)^{-1} d / 2) / (sqrt(D + d4) - sqrt(d4))`` where
    ``D = det(V1+V2)`` and ``d4 = 4 (det V1 - 1/4)(det V2 - 1/4)``.
    """
    m1, v1 = covariance(p1)
    m2, v2 = covariance(p2)
    vs = v1 + v2
    d = m1 - m2
    big = np.linalg.det(vs)
    small = 4.0 * max(np.linalg.det(v1) - 0.25, 0.0) * max(np.linalg.det(v2) - 0.25, 0.0)
    return float(np.exp(-0.5 * d @ np.linalg.solve(vs, d)) / (math.sqrt(big + small) - math.sqrt(small)))


def param_errors(est: GaussianParams, truth: GaussianParams) -> dict:
    """Relative errors for ``n``, ``|zeta|``, ``Re zeta``, ``Im zeta`` and absolute errors for ``alpha``."""

    def rel(a, b):
        return abs(a - b) / abs(b) if b != 0 else abs(a - b)

    return {
        "n_thermal": rel(est.n_thermal, truth.n_thermal),
        "zeta_abs": rel(abs(est.zeta), abs(truth.zeta)),
        "zeta_re": rel(est.zeta.real, truth.zeta.real),
        "zeta_im": rel(est.zeta.imag, truth.zeta.imag),
        "alpha_re": abs(est.alpha.real - truth.alpha.real),
        "alpha_im": abs(est.alpha.imag - truth.alpha.imag),
    }
