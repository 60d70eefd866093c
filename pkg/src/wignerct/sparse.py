"""Compressed-sensing reconstruction from few projections.

The grid is written as ``W = B w`` in an orthonormal basis (2-D DCT or
periodized Daubechies wavelets) and ``w`` is found from ``H = A W`` with an
l1 penalty.  ``A`` is the same interpolation operator as
:func:`wignerct.tomography.radon`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.fft import dctn, idctn
from scipy.sparse.linalg import LinearOperator, lsqr

from . import wavelets
from .gaussian import WignerGrid
from .tomography import Sinogram, projection_matrix


@dataclass
class MeasurementSystem:
    angles_deg: np.ndarray
    size_m: int
    extent: float
    matrix: object  # scipy sparse, (N*bins, size_m**2)
    rhs: np.ndarray | None = None
    bins: int = 0
    det_range: float = 0.0

    @property
    def shape(self):
        return self.matrix.shape

    def with_rhs(self, rhs) -> "MeasurementSystem":
        rhs = np.asarray(rhs, dtype=float).ravel()
        if rhs.size != self.matrix.shape[0]:
            raise ValueError(f"rhs has {rhs.size} entries, matrix has {self.matrix.shape[0]} rows")
        return MeasurementSystem(self.angles_deg, self.size_m, self.extent, self.matrix, rhs, self.bins, self.det_range)


def build_measurement(angles_deg, size_m: int, extent: float, bins: int | None = None, det_range: float | None = None) -> MeasurementSystem:
    if size_m % 2 != 1:
        raise ValueError("size_m must be odd")
    angles = np.asarray(angles_deg, dtype=float)
    bins = size_m if bins is None else bins
    det_range = extent if det_range is None else det_range
    mat = projection_matrix(angles, size_m, extent, bins, det_range)
    return MeasurementSystem(angles, size_m, float(extent), mat, None, bins, float(det_range))


def measurement_from_sinogram(s: Sinogram, size_m: int, extent: float) -> MeasurementSystem:
    """Measurement system on the sinogram's own detector with its profiles as rhs."""
    sysm = build_measurement(s.angles_deg, size_m, extent, s.bins, s.range_)
    return sysm.with_rhs(s.profiles().ravel())


# --- bases ----------------------------------------------------------------------


def dct2_analysis(grid) -> np.ndarray:
    return dctn(np.asarray(grid, dtype=float), type=2, norm="ortho")


def dct2_synthesis(coeffs) -> np.ndarray:
    return idctn(np.asarray(coeffs, dtype=float), type=2, norm="ortho")


def _dyadic(n: int, levels: int) -> int:
    size = 1 << int(math.ceil(math.log2(n)))
    while size % (1 << levels):
        size *= 2
    return size


def _pads(n: int, size: int) -> tuple[int, int]:
    before = (size - n) // 2
    return before, size - n - before


def dwt2_analysis(grid, order: int = 4, levels: int = 3) -> np.ndarray:
    """Zero-pad to a dyadic square (split evenly, extra row/column after) and transform."""
    grid = np.asarray(grid, dtype=float)
    size = _dyadic(grid.shape[0], levels)
    a, b = _pads(grid.shape[0], size)
    return wavelets.dwt2(np.pad(grid, ((a, b), (a, b))), order, levels)


def dwt2_synthesis(coeffs, size_m: int, order: int = 4, levels: int = 3) -> np.ndarray:
    """Inverse transform cropped back to ``size_m``; the adjoint of :func:`dwt2_analysis`."""
    full = wavelets.idwt2(coeffs, order, levels)
    a, _ = _pads(size_m, full.shape[0])
    return full[a : a + size_m, a : a + size_m]


@dataclass(frozen=True)
class SparseBasis:
    kind: str = "dct2"
    order: int = 4
    levels: int = 3

    def __post_init__(self):
        if self.kind not in ("dct2", "daubechies"):
            raise ValueError(f"unknown basis {self.kind!r}")
        if self.kind == "daubechies":
            wavelets.daubechies_filter(self.order)
            if self.levels < 1:
                raise ValueError("levels must be >= 1")

    def coeff_shape(self, size_m: int) -> tuple[int, int]:
        if self.kind == "dct2":
            return (size_m, size_m)
        n = _dyadic(size_m, self.levels)
        return (n, n)

    def analysis(self, grid) -> np.ndarray:
        if self.kind == "dct2":
            return dct2_analysis(grid)
        return dwt2_analysis(grid, self.order, self.levels)

    def synthesis(self, coeffs, size_m: int) -> np.ndarray:
        if self.kind == "dct2":
            return dct2_synthesis(coeffs)
        return dwt2_synthesis(coeffs, size_m, self.order, self.levels)

    def label(self) -> str:
        return "dct2" if self.kind == "dct2" else f"db{self.order}x{self.levels}"


def soft_threshold(v, lam: float):
    if lam < 0:
        raise ValueError("threshold must be >= 0")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


# --- solvers ----------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """``lam`` is relative to ``lam_max = ||(AB)^T H||_inf`` (the smallest penalty giving ``w = 0``).

    ``step`` is a multiple of ``1/L`` with ``L`` the power-iteration estimate
    of ``||A||^2``.
    """

    kind: str = "l1_min"
    max_iters: int = 500
    step: float = 1.0
    lam: float = 1e-3
    tol: float = 0.05
    debias: bool = True
    patience: int = 20
    decay_iters: int = 200  # threshold continuation length for iterative_threshold

    def __post_init__(self):
        if self.kind not in ("l1_min", "iterative_threshold"):
            raise ValueError(f"unknown solver {self.kind!r}")
        if self.max_iters <= 0 or self.step <= 0 or self.tol <= 0 or self.patience <= 0:
            raise ValueError("max_iters, step, tol and patience must be positive")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    def to_json(self) -> dict:
        return dict(self.__dict__)


def load_defaults() -> dict:
    text = resources.files("wignerct").joinpath("sparse_defaults.json").read_text()
    return json.loads(text)


def default_config(kind: str = "l1_min") -> SolverConfig:
    return SolverConfig(kind=kind, **load_defaults()[kind])


class SolverError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class SolveResult:
    grid: WignerGrid
    coeffs: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def lipschitz(matrix, iters: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue of ``A^T A`` by power iteration, inflated by 1%."""
    v = np.random.default_rng(seed).standard_normal(matrix.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = matrix.T @ (matrix @ v)
        lam = float(np.linalg.norm(w))
        v = w / lam
    return 1.01 * lam


def solve(sysm: MeasurementSystem, basis: SparseBasis, cfg: SolverConfig) -> SolveResult:
    if sysm.rhs is None:
        raise ValueError("measurement system has no rhs")
    m = sysm.size_m
    a = sysm.matrix
    h = sysm.rhs
    if a.shape[0] >= m * m:
        raise ValueError("system is not under-determined; compressed sensing does not apply")
    shape = basis.coeff_shape(m)

    def fwd(w):
        return a @ basis.synthesis(w.reshape(shape), m).ravel()

    def adj(r):
        return basis.analysis((a.T @ r).reshape(m, m)).ravel()

    lip = lipschitz(a)
    lam_max = float(np.max(np.abs(adj(h))))
    lam = cfg.lam * lam_max
    step = cfg.step / lip
    diag = {"solver": cfg.kind, "basis": basis.label(), "lipschitz": lip, "lam_max": lam_max, "lam": lam, "step": step}

    if cfg.kind == "l1_min":
        w, trace = _fista(fwd, adj, h, lam, step, cfg, shape)
    else:
        if cfg.step > 1.0 + 1e-12:
            raise SolverError(f"step {cfg.step}/L exceeds the Lipschitz bound; iterative thresholding would diverge", diag)
        w, trace = _iht(fwd, adj, h, lam, lam_max, step, cfg, shape)
    diag["objective"] = trace
    diag["iterations"] = len(trace)
    diag["support"] = int(np.count_nonzero(w))

    if cfg.debias and np.count_nonzero(w):
        w = _debias(fwd, adj, h, w, shape)
    grid_vals = basis.synthesis(w.reshape(shape), m)
    resid = float(np.linalg.norm(a @ grid_vals.ravel() - h) / np.linalg.norm(h))
    diag["residual"] = resid
    diag["success"] = resid <= cfg.tol
    grid = WignerGrid(m, sysm.extent, grid_vals, meta={"method": f"cs-{basis.label()}", "solver": cfg.kind})
    return SolveResult(grid, w, diag)


def _objective(w, r, lam):
    return lam * float(np.abs(w).sum()) + 0.5 * float(r @ r)


def _fista(fwd, adj, h, lam, step, cfg, shape):
    """Monotone FISTA with backtracking on ``lam ||w||_1 + ||A B w - H||^2 / 2``."""
    w = np.zeros(int(np.prod(shape)))
    y = w.copy()
    t = 1.0
    obj = _objective(w, fwd(w) - h, lam)
    trace = [obj]
    for it in range(cfg.max_iters):
        ry = fwd(y) - h
        gy = adj(ry)
        fy = 0.5 * float(ry @ ry)
        while True:
            z = soft_threshold(y - step * gy, step * lam)
            rz = fwd(z) - h
            dz = z - y
            if 0.5 * float(rz @ rz) <= fy + float(gy @ dz) + float(dz @ dz) / (2 * step) + 1e-14 * max(fy, 1.0):
                break
            step *= 0.5
            if step < 1e-30:
                raise SolverError("backtracking failed to find a descent step")
        obj_z = _objective(z, rz, lam)
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        w_prev = w
        if obj_z <= obj:
            w, obj = z, obj_z
        y = w + (t / t_next) * (z - w) + ((t - 1) / t_next) * (w - w_prev)
        t = t_next
        trace.append(obj)
        if it > cfg.patience and trace[-cfg.patience - 1] - obj <= 1e-10 * max(abs(obj), 1e-300):
            break
    _check_monotone(trace, cfg)
    return w, trace


def _iht(fwd, adj, h, lam, lam_max, step, cfg, shape):
    """Landweber data step, analysis, soft threshold, synthesis; threshold decays geometrically to ``lam``."""
    w = np.zeros(int(np.prod(shape)))
    trace = [_objective(w, fwd(w) - h, lam)]
    start = max(lam_max * 0.5, lam)
    ratio = (lam / start) ** (1.0 / max(cfg.decay_iters, 1)) if lam > 0 else 0.0
    thr = start
    for it in range(cfg.max_iters):
        r = fwd(w) - h
        w = soft_threshold(w - step * adj(r), step * thr)
        thr = max(thr * ratio, lam)
        trace.append(_objective(w, fwd(w) - h, lam))
        if it > cfg.decay_iters + cfg.patience and trace[-cfg.patience - 1] - trace[-1] <= 1e-10 * max(abs(trace[-1]), 1e-300):
            break
    return w, trace


def _check_monotone(trace, cfg):
    tail = np.asarray(trace[5:])
    if tail.size > cfg.patience and np.any(np.diff(tail) > 1e-9 * np.abs(tail[:-1]) + 1e-300):
        raise SolverError("objective increased; the iteration diverges")


def _debias(fwd, adj, h, w, shape, iters: int = 200):
    """Least-squares refit of the nonzero coefficients (support held fixed)."""
    mask = w != 0
    n = int(mask.sum())

    def mv(x):
        full = np.zeros_like(w)
        full[mask] = x
        return fwd(full)

    def rmv(r):
        return adj(r)[mask]

    op = LinearOperator((h.size, n), matvec=mv, rmatvec=rmv, dtype=float)
    sol = lsqr(op, h, x0=w[mask], atol=1e-12, btol=1e-12, iter_lim=iters)[0]
    out = np.zeros_like(w)
    out[mask] = sol
    return out
