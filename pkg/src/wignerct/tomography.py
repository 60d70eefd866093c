"""Radon projection of Wigner grids and filtered-backprojection inversion.

The profile at angle ``phi`` is the marginal ``h_phi(t)`` of
``X_phi = x cos phi + p sin phi``, obtained by integrating ``W`` along the
perpendicular direction ``(-sin phi, cos phi)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .gaussian import GaussianParams, WignerGrid, params_from_covariance, quad_mean, quad_var


@dataclass
class Sinogram:
    """Projections on ``linspace(-range_, range_, bins)``.

    ``mode == "sampled"``: ``data`` is ``(N, bins)`` profile densities.
    ``mode == "gaussian"``: ``data`` is ``(N, 2)`` (mean, variance) per angle and
    profiles are evaluated on demand.
    """

    angles_deg: np.ndarray
    bins: int
    range_: float
    data: np.ndarray
    mode: str = "sampled"

    def __post_init__(self):
        self.angles_deg = np.asarray(self.angles_deg, dtype=float)
        self.data = np.asarray(self.data, dtype=float)
        if self.mode not in ("sampled", "gaussian"):
            raise ValueError(f"unknown sinogram mode {self.mode!r}")
        if self.angles_deg.size == 0:
            raise ValueError("sinogram has no angles")
        width = self.bins if self.mode == "sampled" else 2
        if self.data.shape != (self.angles_deg.size, width):
            raise ValueError(f"data shape {self.data.shape} does not match {self.angles_deg.size} angles x {width}")
        if self.bins < 2 or self.range_ <= 0:
            raise ValueError("need bins >= 2 and range > 0")
        if self.mode == "gaussian" and np.any(self.data[:, 1] <= 0):
            raise ValueError("profile variances must be positive")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.range_, self.range_, self.bins)

    @property
    def step(self) -> float:
        return 2.0 * self.range_ / (self.bins - 1)

    def profiles(self, axis=None) -> np.ndarray:
        """Profile densities on ``axis`` (default: the sinogram's own bins)."""
        if self.mode == "sampled":
            if axis is not None:
                raise ValueError("sampled sinograms can only be read on their own axis")
            return self.data
        t = self.axis if axis is None else np.asarray(axis, dtype=float)
        m = self.data[:, :1]
        v = self.data[:, 1:]
        return np.exp(-0.5 * (t[None, :] - m) ** 2 / v) / np.sqrt(2 * math.pi * v)

    def __add__(self, other):
        self._check_compatible(other)
        return Sinogram(self.angles_deg, self.bins, self.range_, self.data + other.data)

    def __mul__(self, k: float):
        if self.mode != "sampled":
            raise ValueError("only sampled sinograms can be scaled")
        return Sinogram(self.angles_deg, self.bins, self.range_, k * self.data)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if self.mode != "sampled" or other.mode != "sampled":
            raise ValueError("only sampled sinograms can be added")
        if not (np.array_equal(self.angles_deg, other.angles_deg) and self.bins == other.bins and self.range_ == other.range_):
            raise ValueError("sinograms differ in angles or binning")


def _ray_weights(angle_deg: float, size_m: int, extent: float, t: np.ndarray):
    """Joseph-method interpolation weights for all rays of one angle.

    Returns (ray index, pixel index, weight) triplets with pixels flattened
    as ``ip * size_m + jx``.
    """
    d = 2.0 * extent / (size_m - 1)
    axis = np.linspace(-extent, extent, size_m)
    phi = math.radians(angle_deg)
    c, s = math.cos(phi), math.sin(phi)
    rows = np.arange(t.size)[:, None]
    if abs(c) >= abs(s):
        # step along p, interpolate in x: x = (t - p sin)/cos
        coord = (t[:, None] - axis[None, :] * s) / c
        other = np.broadcast_to(np.arange(size_m)[None, :], coord.shape)
        weight = d / abs(c)
        along_x = True
    else:
        coord = (t[:, None] - axis[None, :] * c) / s
        other = np.broadcast_to(np.arange(size_m)[None, :], coord.shape)
        weight = d / abs(s)
        along_x = False
    frac = (coord + extent) / d
    j0 = np.floor(frac).astype(int)
    w1 = frac - j0
    out_r, out_c, out_w = [], [], []
    for j, w in ((j0, 1.0 - w1), (j0 + 1, w1)):
        ok = (j >= 0) & (j < size_m) & (w > 0)
        rr = np.broadcast_to(rows, coord.shape)[ok]
        if along_x:
            pix = other[ok] * size_m + j[ok]
        else:
            pix = j[ok] * size_m + other[ok]
        out_r.append(rr)
        out_c.append(pix)
        out_w.append(weight * w[ok])
    return np.concatenate(out_r), np.concatenate(out_c), np.concatenate(out_w)


def projection_matrix(angles_deg, size_m: int, extent: float, bins: int | None = None, det_range: float | None = None):
    """Sparse ``(N*bins, size_m^2)`` map from ``values.ravel()`` to stacked profile densities."""
    bins = size_m if bins is None else bins
    det_range = extent if det_range is None else det_range
    t = np.linspace(-det_range, det_range, bins)
    rs, cs, ws = [], [], []
    for k, a in enumerate(angles_deg):
        r, c, w = _ray_weights(float(a), size_m, extent, t)
        rs.append(r + k * bins)
        cs.append(c)
        ws.append(w)
    shape = (len(angles_deg) * bins, size_m * size_m)
    return sparse.csr_matrix((np.concatenate(ws), (np.concatenate(rs), np.concatenate(cs))), shape=shape)


def _check_angles(angles_deg) -> np.ndarray:
    angles = np.asarray(angles_deg, dtype=float)
    if angles.size == 0:
        raise ValueError("angle list is empty")
    if np.any(angles < 0) or np.any(angles >= 180):
        raise ValueError("angles must lie in [0, 180)")
    return angles


def radon(grid: WignerGrid, angles_deg) -> Sinogram:
    """Line integrals of the grid; detector bins coincide with the grid axis."""
    angles = _check_angles(angles_deg)
    a = projection_matrix(angles, grid.size_m, grid.extent)
    data = (a @ grid.values.ravel()).reshape(angles.size, grid.size_m)
    return Sinogram(angles, grid.size_m, grid.extent, data)


def gaussian_sinogram(params: GaussianParams, angles_deg, bins: int, range_: float) -> Sinogram:
    angles = np.asarray(angles_deg, dtype=float)
    if angles.size == 0:
        raise ValueError("angle list is empty")
    means = np.atleast_1d(quad_mean(params, angles))
    variances = np.atleast_1d(quad_var(params, angles))
    return sinogram_from_stats(angles, means, variances, bins, range_)


def sinogram_from_stats(angles_deg, means, variances, bins: int, range_: float) -> Sinogram:
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    reach = np.abs(means) + 5 * np.sqrt(np.clip(variances, 0, None))
    if np.any(reach > range_):
        warnings.warn(f"profile extends beyond the detector range ({reach.max():.3g} > {range_:.3g})", stacklevel=2)
    return Sinogram(angles_deg, bins, range_, np.column_stack([means, variances]), mode="gaussian")


def ramp_filter(n: int, step: float, window: tuple[float, float] = (0.8, 1.0)) -> np.ndarray:
    """Frequency response of the band-limited ramp for a length-``n`` profile.

    Built from the spatial Ram-Lak kernel (``1/(4 d^2)`` at 0, ``-1/(pi k d)^2``
    at odd ``k``) on a zero-padded power-of-two length of at least ``2n``,
    apodized with a raised cosine rolling off between the two window
    fractions of Nyquist.  Returns ``(padded length,)`` real response scaled
    by ``step`` so that convolution approximates the continuous integral.
    """
    size = 1 << int(math.ceil(math.log2(2 * n)))
    k = np.arange(size)
    k = np.where(k <= size // 2, k, k - size)
    h = np.zeros(size)
    h[k == 0] = 1.0 / (4 * step * step)
    odd = k % 2 == 1
    h[odd] = -1.0 / (math.pi * k[odd] * step) ** 2
    resp = np.real(np.fft.fft(h)) * step
    lo, hi = window
    f = np.abs(np.fft.fftfreq(size)) / 0.5  # fraction of Nyquist
    taper = np.where(f <= lo, 1.0, np.where(f >= hi, 0.0, 0.5 * (1 + np.cos(math.pi * (f - lo) / max(hi - lo, 1e-12)))))
    return resp * taper


def _fold(angles: np.ndarray, profiles: np.ndarray, centered: bool):
    """Map angles into [0, 180); a profile at phi+180 is the mirrored profile at phi."""
    angles = np.mod(angles, 360.0)
    flip = angles >= 180.0
    out = profiles.copy()
    if np.any(flip):
        if not centered:
            raise ValueError("cannot fold a profile whose axis is not symmetric")
        out[flip] = out[flip, ::-1]
    return np.where(flip, angles - 180.0, angles), out


def fbp(
    s: Sinogram,
    size_m: int,
    extent: float,
    normalize: bool = True,
    window: tuple[float, float] = (0.8, 1.0),
    oversample: int = 2,
) -> WignerGrid:
    """Filtered backprojection ``W(x, p) = int_0^pi q_phi(x cos phi + p sin phi) dphi``.

    ``q_phi`` is the ramp-filtered profile.  Gaussian-mode sinograms are
    sampled on an internal detector ``oversample`` times finer than the grid
    that covers the grid's diagonal.
    """
    if s.angles_deg.size < 2:
        raise ValueError("need at least 2 angles")
    if size_m % 2 != 1 or size_m < 3:
        raise ValueError("size_m must be an odd integer >= 3")
    if s.mode == "gaussian":
        d = 2.0 * extent / (size_m - 1) / oversample
        half = int(math.ceil(math.sqrt(2.0) * extent / d))
        t = np.arange(-half, half + 1) * d
        prof = s.profiles(t)
    else:
        d = s.step
        # zero-extend so the filtered tails reach the grid corners
        extra = max(int(math.ceil((math.sqrt(2.0) * extent - s.range_) / d)), 0)
        ext = d * np.arange(1, extra + 1)
        t = np.concatenate([-s.range_ - ext[::-1], s.axis, s.range_ + ext])
        prof = np.pad(s.data, ((0, 0), (extra, extra)))
    angles, prof = _fold(s.angles_deg, prof, centered=True)
    if np.unique(np.round(angles, 9)).size < 2:
        raise ValueError("need at least 2 distinct angles modulo 180 deg")

    resp = ramp_filter(t.size, d, window)
    padded = np.zeros((prof.shape[0], resp.size))
    padded[:, : t.size] = prof
    q = np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * resp, axis=1))[:, : t.size]

    axis = np.linspace(-extent, extent, size_m)
    xx, pp = np.meshgrid(axis, axis)
    values = np.zeros((size_m, size_m))
    for a, row in zip(angles, q):
        phi = math.radians(a)
        values += np.interp(xx * math.cos(phi) + pp * math.sin(phi), t, row, left=0.0, right=0.0)
    values *= math.pi / angles.size
    meta = {"filter": "ram-lak", "window": "raised-cosine", "window_band": list(window), "interp": "linear", "angles": angles.size}
    grid = WignerGrid(size_m, float(extent), values, meta=meta)
    if normalize:
        mass = grid.integral()
        if not mass > 0:
            raise FloatingPointError("reconstruction has non-positive mass; cannot normalize")
        grid.values = grid.values / mass
        meta["normalized_from"] = mass
    return grid


def grid_moments(grid: WignerGrid, mask=None, positive: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance of ``(x, p)`` under the grid weights.

    ``mask`` restricts the sum to selected pixels; ``positive`` drops negative weights.
    """
    w = grid.values
    if positive:
        w = np.clip(w, 0.0, None)
    if mask is not None:
        w = np.where(mask, w, 0.0)
    mass = w.sum()
    if not mass > 0:
        raise ValueError("grid has non-positive total weight")
    axis = grid.axis
    xx, pp = np.meshgrid(axis, axis)
    mx = (w * xx).sum() / mass
    mp = (w * pp).sum() / mass
    dx, dp = xx - mx, pp - mp
    cov = np.array([[(w * dx * dx).sum(), (w * dx * dp).sum()], [(w * dx * dp).sum(), (w * dp * dp).sum()]]) / mass
    return np.array([mx, mp]), cov


def _positive_definite(cov) -> bool:
    return bool(np.all(np.linalg.eigvalsh(cov) > 0))


def _truncated_fraction(k2: float) -> float:
    """Share of a 2-D Gaussian's covariance carried inside the ellipse of squared radius ``k2``."""
    e = math.exp(-0.5 * k2)
    return 1.0 - 0.5 * k2 * e / (1.0 - e)


def refit_gaussian(grid: WignerGrid, window: float = 5.0, iters: int = 20) -> GaussianParams:
    """Gaussian state from the grid's mean vector and covariance.

    Whole-grid moments are used when they form a valid covariance.  Streaks
    from very few angles can carry enough signed weight far from the state to
    break this; the fallback then takes moments inside the ``window``-sigma
    ellipse of a running estimate seeded by the region above half the peak.
    For a Gaussian, moments inside the ``k``-sigma ellipse hold the fraction
    ``1 - (k^2/2) e^{-k^2/2} / (1 - e^{-k^2/2})`` of the covariance, which is
    divided out (the half-maximum seed is ``k^2 = 2 ln 2``).
    """
    try:
        mean, cov = grid_moments(grid)
    except ValueError:
        cov = None
    if cov is not None and _positive_definite(cov):
        return params_from_covariance(mean, cov)
    return _windowed_refit(grid, window, iters)


def _windowed_refit(grid: WignerGrid, window: float, iters: int) -> GaussianParams:
    top = grid.values.max()
    if not top > 0:
        raise ValueError("grid has no positive values")
    mean, cov = grid_moments(grid, grid.values >= 0.5 * top)
    cov = cov / _truncated_fraction(2.0 * math.log(2.0))
    if not _positive_definite(cov):
        # a single bright pixel: fall back to one pixel width
        cov = cov + np.eye(2) * grid.step**2
    kept = _truncated_fraction(window * window)
    axis = grid.axis
    xx, pp = np.meshgrid(axis, axis)
    for _ in range(iters):
        d = np.stack([xx - mean[0], pp - mean[1]], axis=-1)
        mask = np.einsum("...i,ij,...j->...", d, np.linalg.inv(cov), d) <= window * window
        new_mean, new_cov = grid_moments(grid, mask)
        if not _positive_definite(new_cov):
            new_mean, new_cov = grid_moments(grid, mask, positive=True)
        new_cov = new_cov / kept
        done = np.allclose(new_mean, mean, rtol=0, atol=1e-12) and np.allclose(new_cov, cov, rtol=0, atol=1e-12)
        mean, cov = new_mean, new_cov
        if done:
            break
    return params_from_covariance(mean, cov)
