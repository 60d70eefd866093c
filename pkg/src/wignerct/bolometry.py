"""Bolometric detection chain: photon statistics behind a beam splitter, the
thermometer lineshape, calibration curves and the inversion back to
quadrature statistics.

The signal mode ``a`` meets a coherent homodyne field ``beta = |beta| e^{i phi}``
on a beam splitter of transmissivity ``G``; the bolometer absorbs
``c = sqrt(G) a + i sqrt(1-G) b``.  Its photon number then carries the
quadrature at ``phi + 90`` degrees.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants
from scipy.optimize import brentq, least_squares

from .gaussian import GaussianParams, MomentSet, QuadratureStats, moments, quad_mean, quad_var
from .special import erfcx

SQRT2 = math.sqrt(2.0)


def db_to_linear(db: float) -> float:
    """Power ratio: ``10^(dB/10)``."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChainConfig:
    gamma_t: float = 0.49
    eta0_db: float = -6.5
    eta1_db: float = -3.4
    f0_hz: float = 8.43e9
    fwhm_hz: float = 1.33e8

    def __post_init__(self):
        for name in ("gamma_t", "eta0_db", "eta1_db", "f0_hz", "fwhm_hz"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 < self.gamma_t < 1.0:
            raise ValueError(f"gamma_t must lie in (0, 1), got {self.gamma_t}")
        if self.f0_hz <= 0 or self.fwhm_hz <= 0:
            raise ValueError("f0_hz and fwhm_hz must be positive")

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, obj: dict) -> "ChainConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown ChainConfig fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})


@dataclass(frozen=True)
class PhotonStats:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise ValueError(f"photon statistics must be finite: {self}")
        if self.mean < 0 or self.variance < 0:
            raise ValueError(f"photon statistics must be non-negative: mean={self.mean}, variance={self.variance}")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))


# --- photon statistics at the bolometer --------------------------------------


def combined_stats_approx(stats: QuadratureStats, n_a: float, gamma_t: float, beta2: float) -> PhotonStats:
    """Leading order in ``|beta|``; ``stats`` is the signal quadrature at ``phi + 90``."""
    if not beta2 > 0:
        raise ValueError("beta2 must be > 0")
    g = gamma_t
    mean = g * n_a + (1 - g) * beta2 + math.sqrt(2 * g * (1 - g) * beta2) * stats.mean
    var = (1 - g) * beta2 * ((1 - g) + 2 * g * stats.variance)
    return PhotonStats(mean, var)


def _xvar_from_moments(m: MomentSet, angle_rad: float) -> tuple[float, float]:
    e = cmath.exp(-1j * angle_rad)
    mean = SQRT2 * (m.a * e).real
    x2 = (2 * (m.aa * e * e).real + 2 * m.ad_a + 1) / 2
    return mean, x2 - mean * mean


def combined_stats_exact(m: MomentSet, gamma_t: float, beta: complex) -> PhotonStats:
    """All orders in ``beta`` for an arbitrary signal state given its moments.

    With ``psi = phi + 90``::

        <n_c> = G<n_a> + (1-G)|b|^2 + sqrt(2G(1-G))|b| <X_psi>
        var   = (1-G)|b|^2 [(1-G) + 2G var X_psi] + G^2 var n_a + G(1-G)<n_a>
              + sqrt(G(1-G))|b| [iG(2<a+a+a> e^{i phi} - 2<a+aa> e^{-i phi})
                                 + sqrt2 (1 - 2G<n_a>) <X_psi>]
    """
    if not 0 < gamma_t < 1:
        raise ValueError("gamma_t must lie in (0, 1)")
    g = gamma_t
    b = abs(beta)
    phi = cmath.phase(beta) if b > 0 else 0.0
    x_mean, x_var = _xvar_from_moments(m, phi + math.pi / 2)
    n_a = m.ad_a
    mean = g * n_a + (1 - g) * b * b + math.sqrt(2 * g * (1 - g)) * b * x_mean
    cubic = 1j * g * (2 * m.ad_ad_a * cmath.exp(1j * phi) - 2 * m.ad_a_a * cmath.exp(-1j * phi))
    var = (
        (1 - g) * b * b * ((1 - g) + 2 * g * x_var)
        + g * g * m.photon_variance
        + g * (1 - g) * n_a
        + math.sqrt(g * (1 - g)) * b * (cubic.real + SQRT2 * (1 - 2 * g * n_a) * x_mean)
    )
    return PhotonStats(max(mean, 0.0), max(var, 0.0))


def homodyne_beta(beta2: float, phase_deg: float) -> complex:
    return math.sqrt(beta2) * cmath.exp(1j * math.radians(phase_deg))


# --- unit conversions ---------------------------------------------------------


def thermal_occupation(t_kelvin: float, cfg: ChainConfig = ChainConfig()) -> float:
    """Bose-Einstein occupation at ``f0`` scaled by the insertion loss ``eta0``."""
    if not t_kelvin > 0:
        raise ValueError("temperature must be > 0")
    x = constants.h * cfg.f0_hz / (constants.k * t_kelvin)
    return db_to_linear(cfg.eta0_db) / math.expm1(x) if x < 700 else 0.0


def homodyne_photon_number(p_dbm: float, cfg: ChainConfig = ChainConfig()) -> float:
    """``|beta|^2 = eta1 P / (FWHM h f0)`` with ``P`` given in dBm."""
    if math.isnan(p_dbm) or p_dbm == math.inf:
        raise ValueError("power must be finite or -inf")
    if p_dbm == -math.inf:
        return 0.0
    watts = 1e-3 * db_to_linear(p_dbm)
    return db_to_linear(cfg.eta1_db) * watts / (cfg.fwhm_hz * constants.h * cfg.f0_hz)


# --- thermometer lineshape ----------------------------------------------------


@dataclass(frozen=True)
class VoigtParams:
    """Thermometer resonance.  ``gamma_hz`` and ``gamma_c_hz`` are ordinary
    frequencies (the lineshape uses ``2 pi`` times them); ``sigma2`` is in Hz^2."""

    mu_hz: float
    sigma2: float
    gamma_hz: float = 2.0e6
    gamma_c_hz: float = 0.8e6
    asym_rad: float = 0.05
    baseline: complex = 1.0 + 0j

    def __post_init__(self):
        for name in ("mu_hz", "sigma2", "gamma_hz", "gamma_c_hz", "asym_rad"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not cmath.isfinite(complex(self.baseline)):
            raise ValueError("baseline must be finite")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if not self.gamma_hz >= self.gamma_c_hz > 0:
            raise ValueError(f"need gamma >= gamma_c > 0, got gamma={self.gamma_hz}, gamma_c={self.gamma_c_hz}")
        object.__setattr__(self, "baseline", complex(self.baseline))

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in ("mu_hz", "sigma2", "gamma_hz", "gamma_c_hz", "asym_rad")}
        d["baseline_re"] = self.baseline.real
        d["baseline_im"] = self.baseline.imag
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "VoigtParams":
        return cls(
            float(obj["mu_hz"]),
            float(obj["sigma2"]),
            float(obj["gamma_hz"]),
            float(obj["gamma_c_hz"]),
            float(obj["asym_rad"]),
            complex(float(obj["baseline_re"]), float(obj["baseline_im"])),
        )


LORENTZ_SWITCH = 1e-6
DEFAULT_SWEEP = (500e6, 550e6, 1001)


def default_frequencies() -> np.ndarray:
    return np.linspace(*DEFAULT_SWEEP)


def voigt_reflection(p: VoigtParams, f_probe_hz):
    """Gaussian-averaged Lorentzian reflection

    ``S11 = b [1 - e^{i a} g_c/(2 sqrt(2 pi) s) erfcx((g/2 + i D)/(2 sqrt2 pi s))]``

    with angular rates ``g = 2 pi gamma_hz``, ``D = 2 pi (mu - f)`` and ``s``
    the Gaussian width in Hz.  Below ``s^2 < 1e-6 (gamma_hz/2)^2`` the
    Lorentzian limit ``1 - e^{i a} g_c/(g/2 + i D)`` is used instead.
    """
    f = np.asarray(f_probe_hz, dtype=float)
    g = 2 * math.pi * p.gamma_hz
    gc = 2 * math.pi * p.gamma_c_hz
    delta = 2 * math.pi * (p.mu_hz - f)
    rot = cmath.exp(1j * p.asym_rad)
    if p.sigma2 < LORENTZ_SWITCH * (p.gamma_hz / 2) ** 2:
        dip = gc / (g / 2 + 1j * delta)
    else:
        s = math.sqrt(p.sigma2)
        dip = gc / (2 * math.sqrt(2 * math.pi) * s) * erfcx((g / 2 + 1j * delta) / (2 * SQRT2 * math.pi * s))
    return p.baseline * (1 - rot * dip)


def synthesize_spectrum(p: VoigtParams, freqs=None, noise: float = 0.0, rng=None):
    """Lineshape on ``freqs`` plus complex white noise of per-quadrature std ``noise``."""
    freqs = default_frequencies() if freqs is None else np.asarray(freqs, dtype=float)
    s11 = voigt_reflection(p, freqs)
    if noise > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise > 0")
        s11 = s11 + noise * (rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size))
    return freqs, s11


class VoigtFitError(RuntimeError):
    """Fit failed; ``best`` holds the best parameter vector found and ``residual`` its norm."""

    def __init__(self, msg, best=None, residual=None):
        super().__init__(msg)
        self.best = best
        self.residual = residual


@dataclass
class VoigtFit:
    params: VoigtParams
    residual_norm: float
    nfev: int


MHZ = 1e6


def _unpack(x, f_ref) -> VoigtParams:
    mu, sig, gam, gc, asym, bre, bim = x
    return VoigtParams(f_ref + mu * MHZ, (sig * MHZ) ** 2, gam * MHZ, min(gc, gam) * MHZ, asym, complex(bre, bim))


def _initial_guesses(freqs, s11):
    edge = max(len(freqs) // 20, 2)
    base = np.median(np.concatenate([s11[:edge], s11[-edge:]]).real) + 1j * np.median(
        np.concatenate([s11[:edge], s11[-edge:]]).imag
    )
    dip = 1 - s11 / base
    mag = np.abs(dip)
    k = int(np.argmax(mag))
    depth = mag[k]
    above = freqs[mag >= 0.5 * depth]
    width = max(above.max() - above.min(), 3 * abs(freqs[1] - freqs[0])) / MHZ
    asym = cmath.phase(dip[k])
    out = []
    for share in (0.7, 0.4, 0.95):
        gam = width * share
        sig = width * (1 - share) * 0.6 + 1e-3
        gc = min(depth * gam / 2, gam * 0.99)
        out.append(np.array([freqs[k] / MHZ, sig, gam, gc, asym, base.real, base.imag]))
    return base, depth, out


def fit_voigt(freqs, s11, max_nfev: int = 2000, noise_floor: float | None = None) -> VoigtFit:
    """Joint least squares on real and imaginary parts, a few starting points, best kept."""
    freqs = np.asarray(freqs, dtype=float)
    s11 = np.asarray(s11, dtype=complex)
    if freqs.shape != s11.shape or freqs.size < 50:
        raise ValueError("need >= 50 matching frequency points")
    if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(s11))):
        raise ValueError("spectrum contains non-finite values")
    base, depth, starts = _initial_guesses(freqs, s11)
    if noise_floor is None:
        # median absolute first difference is a robust white-noise scale
        noise_floor = float(np.median(np.abs(np.diff(s11)))) / SQRT2
    if abs(base) == 0 or depth < max(1e-3, 8 * noise_floor / abs(base)):
        raise VoigtFitError(f"no resonance found: dip depth {depth:.3g}")

    f_ref = float(freqs[0])
    fm = (freqs - f_ref) / MHZ

    def resid(x):
        mu, sig, gam, gc, asym, bre, bim = x
        p = VoigtParams(f_ref + mu * MHZ, (sig * MHZ) ** 2, gam * MHZ, min(gc, gam) * MHZ, asym, complex(bre, bim))
        d = voigt_reflection(p, freqs) - s11
        return np.concatenate([d.real, d.imag])

    lo = [fm.min() - 0.5 * np.ptp(fm), 0.0, 1e-4, 1e-5, -math.pi, -np.inf, -np.inf]
    hi = [fm.max() + 0.5 * np.ptp(fm), np.ptp(fm), 10 * np.ptp(fm), 10 * np.ptp(fm), math.pi, np.inf, np.inf]
    best = None
    for x0 in starts:
        x0 = x0.copy()
        x0[0] -= f_ref / MHZ
        x0 = np.clip(x0, np.array(lo) + 1e-9, np.array(hi) - 1e-9)
        try:
            res = least_squares(resid, x0, bounds=(lo, hi), x_scale="jac", method="trf",
                                xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
        except ValueError:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise VoigtFitError("least squares failed from every starting point")
    norm = float(np.sqrt(2 * best.cost))
    if best.status <= 0:
        raise VoigtFitError(f"no convergence after {best.nfev} evaluations", best.x, norm)
    return VoigtFit(_unpack(best.x, f_ref), norm, int(best.nfev))


# --- calibration ----------------------------------------------------------------


class CalibrationError(ValueError):
    pass


class CalibrationRangeWarning(UserWarning):
    pass


@dataclass
class CalibrationCurves:
    """``<n_c> = sum_k n_coeffs[k] u^k`` with ``u = (mu - mu_center)/mu_scale`` and
    ``var = var_coeffs[0] + var_coeffs[1] sigma2/sigma2_scale``."""

    n_coeffs: tuple
    var_coeffs: tuple
    mu_center: float = 0.0
    mu_scale: float = 1.0
    sigma2_scale: float = 1.0
    mu_range: tuple = (-math.inf, math.inf)
    sigma2_range: tuple = (0.0, math.inf)
    monotone: bool = True
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n_coeffs = tuple(float(c) for c in self.n_coeffs)
        self.var_coeffs = tuple(float(c) for c in self.var_coeffs)
        if len(self.n_coeffs) != 4 or len(self.var_coeffs) != 2:
            raise ValueError("need 4 cubic and 2 affine coefficients")
        if not self.var_coeffs[1] > 0:
            raise CalibrationError("variance slope must be positive")

    def n_of_mu(self, mu):
        u = (np.asarray(mu, dtype=float) - self.mu_center) / self.mu_scale
        return np.polynomial.polynomial.polyval(u, self.n_coeffs)

    def var_of_sigma2(self, sigma2):
        return self.var_coeffs[0] + self.var_coeffs[1] * np.asarray(sigma2, dtype=float) / self.sigma2_scale

    def sigma2_of_var(self, var: float) -> float:
        return (var - self.var_coeffs[0]) / self.var_coeffs[1] * self.sigma2_scale

    def mu_of_n(self, n: float) -> float:
        """Invert the cubic inside (twice) the calibrated range."""
        lo, hi = self.mu_range
        if not (math.isfinite(lo) and math.isfinite(hi)):
            lo, hi = self.mu_center - 10 * self.mu_scale, self.mu_center + 10 * self.mu_scale
        pad = 0.5 * (hi - lo)
        a, b = lo - pad, hi + pad
        fa, fb = float(self.n_of_mu(a)) - n, float(self.n_of_mu(b)) - n
        if fa * fb > 0:
            raise CalibrationError(f"<n_c> = {n:.4g} is outside the invertible range of the calibration")
        return brentq(lambda m: float(self.n_of_mu(m)) - n, a, b, xtol=1e-6, rtol=1e-15)

    def in_range(self, mu: float, sigma2: float) -> bool:
        return self.mu_range[0] <= mu <= self.mu_range[1] and self.sigma2_range[0] <= sigma2 <= self.sigma2_range[1]

    def to_json(self) -> dict:
        return {
            "n_coeffs": list(self.n_coeffs),
            "var_coeffs": list(self.var_coeffs),
            "mu_center": self.mu_center,
            "mu_scale": self.mu_scale,
            "sigma2_scale": self.sigma2_scale,
            "mu_range": list(self.mu_range),
            "sigma2_range": list(self.sigma2_range),
            "monotone": self.monotone,
            "report": self.report,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationCurves":
        try:
            return cls(
                obj["n_coeffs"],
                obj["var_coeffs"],
                float(obj["mu_center"]),
                float(obj["mu_scale"]),
                float(obj["sigma2_scale"]),
                tuple(obj["mu_range"]),
                tuple(obj["sigma2_range"]),
                bool(obj.get("monotone", True)),
                obj.get("report", {}),
            )
        except KeyError as err:
            raise ValueError(f"calibration JSON is missing field {err}") from None


def _cubic_monotone(coeffs, u_lo: float, u_hi: float) -> bool:
    deriv = np.polynomial.polynomial.polyder(coeffs)
    roots = np.polynomial.polynomial.polyroots(deriv) if np.any(deriv[1:]) else []
    for root in np.atleast_1d(roots):
        if abs(root.imag) < 1e-12 and u_lo < root.real < u_hi:
            # a double root only touches zero
            if abs(np.polynomial.polynomial.polyval(root.real, np.polynomial.polynomial.polyder(deriv))) > 1e-12:
                return False
    return True


def calibrate(samples) -> CalibrationCurves:
    """Cubic ``<n_c>(mu)`` and affine ``var(sigma2)`` by linear least squares."""
    samples = list(samples)
    if len(samples) < 8:
        raise CalibrationError(f"need >= 8 calibration samples, got {len(samples)}")
    mu = np.array([p.mu_hz for p, _ in samples])
    s2 = np.array([p.sigma2 for p, _ in samples])
    n = np.array([s.mean for _, s in samples])
    v = np.array([s.variance for _, s in samples])

    center = 0.5 * (mu.max() + mu.min())
    scale = 0.5 * np.ptp(mu)
    s2_scale = float(np.max(np.abs(s2)))
    if scale <= 0 or s2_scale <= 0:
        raise CalibrationError("calibration samples do not span a range (rank-deficient design)")
    u = (mu - center) / scale
    design_n = np.vander(u, 4, increasing=True)
    design_v = np.column_stack([np.ones_like(s2), s2 / s2_scale])
    if np.linalg.matrix_rank(design_n, tol=1e-10) < 4 or np.linalg.matrix_rank(design_v, tol=1e-10) < 2:
        raise CalibrationError("rank-deficient design matrix: too few distinct mu or sigma2 values")

    report = {}
    coeffs = []
    for name, design, y in (("n", design_n, n), ("var", design_v, v)):
        c, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ c
        dof = max(len(y) - design.shape[1], 1)
        s2_hat = float(resid @ resid) / dof
        cov = s2_hat * np.linalg.inv(design.T @ design)
        report[name] = {"rms": float(np.sqrt(np.mean(resid**2))), "max_abs": float(np.max(np.abs(resid))), "cov": cov.tolist()}
        coeffs.append(c)
    monotone = _cubic_monotone(coeffs[0], -1.0, 1.0)
    if not monotone:
        warnings.warn("calibrated <n_c>(mu) is not monotone over the sampled range", CalibrationRangeWarning, stacklevel=2)
    if not coeffs[1][1] > 0:
        raise CalibrationError("fitted variance slope is not positive")
    return CalibrationCurves(
        tuple(coeffs[0]),
        tuple(coeffs[1]),
        float(center),
        float(scale),
        s2_scale,
        (float(mu.min()), float(mu.max())),
        (float(s2.min()), float(s2.max())),
        monotone,
        report,
    )


def apply_calibration(p: VoigtParams, c: CalibrationCurves) -> PhotonStats:
    if not c.in_range(p.mu_hz, p.sigma2):
        warnings.warn(
            f"extrapolating the calibration: mu={p.mu_hz:.6g} Hz, sigma2={p.sigma2:.6g} Hz^2",
            CalibrationRangeWarning,
            stacklevel=2,
        )
    mean = float(c.n_of_mu(p.mu_hz))
    var = float(c.var_of_sigma2(p.sigma2))
    if var < 0:
        raise CalibrationError(f"calibrated variance is negative ({var:.4g}) at sigma2={p.sigma2:.6g}")
    if mean < 0:
        raise CalibrationError(f"calibrated photon number is negative ({mean:.4g}) at mu={p.mu_hz:.6g}")
    return PhotonStats(mean, var)


def invert_calibration(stats: PhotonStats, c: CalibrationCurves, template: VoigtParams | None = None) -> VoigtParams:
    """Thermometer parameters that the calibration maps to ``stats``."""
    mu = c.mu_of_n(stats.mean)
    s2 = c.sigma2_of_var(stats.variance)
    if s2 < 0:
        raise CalibrationError(f"variance {stats.variance:.4g} lies below the calibration's sigma2 = 0 intercept")
    t = template or VoigtParams(0.0, 0.0)
    return VoigtParams(mu, s2, t.gamma_hz, t.gamma_c_hz, t.asym_rad, t.baseline)


def default_calibration() -> CalibrationCurves:
    """Synthetic thermometer response: decreasing cubic in mu, affine in sigma2.

    ``n = -4u + 0.5u^2 - 0.1u^3`` with ``u = (mu - 540 MHz)/10 MHz`` and
    ``sigma2 = (0.3 MHz)^2 + (0.15 MHz)^2 var``.
    """
    s2_scale = 1e12
    s0, kappa = 0.09, 0.0225  # MHz^2
    return CalibrationCurves(
        (0.0, -4.0, 0.5, -0.1),
        (-s0 / kappa, 1.0 / kappa),
        540e6,
        10e6,
        s2_scale,
        (505e6, 540e6),
        (s0 * s2_scale, (s0 + 40 * kappa) * s2_scale),
        True,
    )


# --- inversion to quadrature statistics -------------------------------------------


class ExtractionError(ValueError):
    pass


def _check_uniform(angles) -> None:
    k = len(angles)
    if k < 2:
        raise ExtractionError("need at least two homodyne phases")
    wrapped = np.sort(np.mod(angles, 360.0))
    steps = np.diff(np.append(wrapped, wrapped[0] + 360.0))
    if np.max(np.abs(steps - 360.0 / k)) > 1e-6:
        raise ExtractionError("homodyne phases must uniformly cover a full 360 degree period")


def _invert(series, g: float, beta2: float, offsets=None) -> list[QuadratureStats]:
    angles = np.array([a for a, _ in series], dtype=float)
    means = np.array([s.mean for _, s in series])
    variances = np.array([s.variance for _, s in series])
    if offsets is not None:
        variances = variances - offsets
    xm = (means - means.mean()) / math.sqrt(2 * g * (1 - g) * beta2)
    xv = (variances / ((1 - g) * beta2) - (1 - g)) / (2 * g)
    out = []
    for phi, m, v in zip(angles, xm, xv):
        if not v > 0:
            raise ExtractionError(f"non-positive extracted variance {v:.4g} at homodyne phase {phi:g} deg")
        out.append(QuadratureStats(float((phi + 90.0) % 360.0), float(m), float(v)))
    return out


def signal_photon_number(series, cfg: ChainConfig, beta2: float) -> float:
    """``<n_a>`` from the phase-averaged bolometer photon number."""
    g = cfg.gamma_t
    avg = float(np.mean([s.mean for _, s in series]))
    return (avg - (1 - g) * beta2) / g


def variance_excess(params: GaussianParams, gamma_t: float, beta2: float, phase_deg: float) -> float:
    """Exact minus leading-order bolometer variance for a Gaussian signal."""
    m = moments(params)
    exact = combined_stats_exact(m, gamma_t, homodyne_beta(beta2, phase_deg)).variance
    psi = phase_deg + 90.0
    q = QuadratureStats(psi, float(quad_mean(params, psi)), float(quad_var(params, psi)))
    return exact - combined_stats_approx(q, m.ad_a, gamma_t, beta2).variance


def extract_quadratures(
    series,
    cfg: ChainConfig,
    beta2: float,
    correction: str | None = None,
    max_iter: int = 100,
    tol: float = 1e-12,
) -> list[QuadratureStats]:
    """Invert the leading-order relations angle by angle.

    ``series`` holds ``(homodyne phase in degrees, PhotonStats)`` and must cover
    360 degrees uniformly.  Output angles are the measured quadrature angles
    ``phi + 90`` (mod 360), in input order.

    ``correction="gaussian"`` additionally removes, by fixed-point iteration,
    the sub-leading variance terms implied by the current Gaussian estimate of
    the signal state.
    """
    if not beta2 > 0:
        raise ValueError("beta2 must be > 0")
    series = list(series)
    _check_uniform([a for a, _ in series])
    g = cfg.gamma_t
    stats = _invert(series, g, beta2)
    if correction is None:
        return stats
    if correction != "gaussian":
        raise ValueError(f"unknown correction {correction!r}")

    from .modelfit import FitError, lls_fit

    n_a = signal_photon_number(series, cfg, beta2)
    # coherent part from the means, the rest of <n_a> as isotropic noise
    cm = np.linalg.lstsq(
        np.array([[math.cos(math.radians(s.angle_deg)), math.sin(math.radians(s.angle_deg))] for s in stats]),
        np.array([s.mean for s in stats]),
        rcond=None,
    )[0]
    alpha = complex(cm[0], cm[1]) / SQRT2
    est = GaussianParams(max(n_a - abs(alpha) ** 2, 0.0), alpha=alpha)
    phases = [a for a, _ in series]
    if len({round(s.angle_deg % 180.0, 9) for s in stats}) < 3:
        # squeezing is unobservable here; correct with the isotropic estimate only
        warnings.warn("fewer than 3 distinct angles: variance correction uses the isotropic estimate", stacklevel=2)
        offsets = np.array([variance_excess(est, g, beta2, a) for a in phases])
        return _invert(series, g, beta2, offsets)
    prev = np.array([s.variance for s in stats])
    for _ in range(max_iter):
        offsets = np.array([variance_excess(est, g, beta2, a) for a in phases])
        stats = _invert(series, g, beta2, offsets)
        cur = np.array([s.variance for s in stats])
        try:
            est = lls_fit(stats)[0]
        except FitError as err:
            raise ExtractionError(f"variance correction failed: {err}") from err
        if np.max(np.abs(cur - prev)) < tol:
            break
        prev = cur
    return stats


def fold_half_period(stats: list[QuadratureStats]) -> list[QuadratureStats]:
    """Merge each pair ``(phi, phi + 180)`` into one angle in ``[0, 180)``.

    ``X_{phi+180} = -X_phi``, so means are averaged with the sign flipped and
    variances averaged.  Unpaired angles are mapped over unchanged.
    """
    groups: dict[float, list] = {}
    for s in stats:
        a = s.angle_deg % 360.0
        key = round(a % 180.0, 9) % 180.0
        sign = 1.0 if a < 180.0 - 1e-9 or a >= 360.0 - 1e-9 else -1.0
        groups.setdefault(key, []).append((sign * s.mean, s.variance))
    out = []
    for key in sorted(groups):
        vals = np.array(groups[key])
        out.append(QuadratureStats(float(key), float(vals[:, 0].mean()), float(vals[:, 1].mean())))
    return out
