"""Closed-form model of single-mode squeezed displaced thermal states.

States are written as ``rho = D(alpha) S(zeta) rho_T S(zeta)^dag D(alpha)^dag``
with ``hbar = 1`` so that the vacuum quadrature variance is 1/2.  The
quadrature at angle ``phi`` is ``X_phi = (a^dag e^{i phi} + a e^{-i phi})/sqrt 2``;
``X_0`` is ``x`` and ``X_90`` is ``p``.

Angles are in degrees at every public boundary.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def _check_finite(**values) -> None:
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class SqueezeParam:
    """Squeezing ``zeta = r e^{i theta}``; ``theta`` is normalised into [0, 2pi)."""

    r: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        _check_finite(r=self.r, theta=self.theta)
        if self.r < 0:
            raise ValueError(f"squeezing magnitude must be >= 0, got {self.r}")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @classmethod
    def from_complex(cls, zeta: complex) -> "SqueezeParam":
        return cls(abs(zeta), math.atan2(zeta.imag, zeta.real))

    @property
    def zeta(self) -> complex:
        return self.r * cmath.exp(1j * self.theta)


@dataclass(frozen=True)
class GaussianParams:
    n_thermal: float = 0.0
    squeeze: SqueezeParam = field(default_factory=SqueezeParam)
    alpha: complex = 0j

    def __post_init__(self):
        _check_finite(n_thermal=self.n_thermal, alpha=self.alpha)
        if self.n_thermal < 0:
            raise ValueError(f"n_thermal must be >= 0, got {self.n_thermal}")
        object.__setattr__(self, "n_thermal", float(self.n_thermal))
        object.__setattr__(self, "alpha", complex(self.alpha))

    @classmethod
    def create(cls, n_thermal=0.0, zeta: complex = 0j, alpha: complex = 0j) -> "GaussianParams":
        """Build from a complex squeezing parameter."""
        return cls(n_thermal, SqueezeParam.from_complex(complex(zeta)), complex(alpha))

    @property
    def zeta(self) -> complex:
        return self.squeeze.zeta

    def to_json(self) -> dict:
        return {
            "n_thermal": self.n_thermal,
            "r": self.squeeze.r,
            "theta_rad": self.squeeze.theta,
            "alpha_re": self.alpha.real,
            "alpha_im": self.alpha.imag,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianParams":
        try:
            return cls(
                float(obj["n_thermal"]),
                SqueezeParam(float(obj["r"]), float(obj["theta_rad"])),
                complex(float(obj["alpha_re"]), float(obj["alpha_im"])),
            )
        except KeyError as err:
            raise ValueError(f"GaussianParams JSON is missing field {err}") from None


VACUUM = GaussianParams()


@dataclass(frozen=True)
class QuadratureStats:
    angle_deg: float
    mean: float
    variance: float

    def __post_init__(self):
        _check_finite(angle_deg=self.angle_deg, mean=self.mean, variance=self.variance)
        if self.variance <= 0:
            raise ValueError(f"quadrature variance must be > 0 (angle {self.angle_deg} deg), got {self.variance}")


@dataclass(frozen=True)
class MomentSet:
    """Normally ordered moments up to fourth order.

    Field names spell the operator product, e.g. ``ad_ad_a`` is
    ``<a^dag a^dag a>``.
    """

    a: complex
    ad: complex
    aa: complex
    adad: complex
    ad_a: float
    ad_ad_a: complex
    ad_a_a: complex
    ad_ad_a_a: float

    @property
    def photon_variance(self) -> float:
        return self.ad_ad_a_a + self.ad_a - self.ad_a**2

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


MOMENT_IDS = tuple(MomentSet.__dataclass_fields__)


@dataclass
class WignerGrid:
    """``values[i, j]`` samples ``W(x_j, p_i)`` on ``linspace(-extent, extent, size_m)``.

    Columns are indexed by ``x`` and rows by ``p``, so summing a column
    integrates over ``p``.
    """

    size_m: int
    extent: float
    values: np.ndarray
    clipped: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.size_m % 2 != 1:
            raise ValueError("size_m must be odd so that the origin is a sample")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.size_m, self.size_m):
            raise ValueError(f"values shape {self.values.shape} does not match size_m={self.size_m}")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.size_m)

    @property
    def step(self) -> float:
        return 2.0 * self.extent / (self.size_m - 1)

    def integral(self) -> float:
        return float(self.values.sum() * self.step**2)


def _angle_rad(angle_deg) -> np.ndarray:
    _check_finite(angle_deg=angle_deg)
    return np.deg2rad(angle_deg)


def _excess(params: GaussianParams):
    """Return (<da^dag da>, <da da>) of the fluctuation ``da = a - alpha``."""
    nu = params.n_thermal + 0.5
    r, theta = params.squeeze.r, params.squeeze.theta
    n_fluct = nu * math.cosh(2 * r) - 0.5
    m_fluct = -cmath.exp(1j * theta) * nu * math.sinh(2 * r)
    return n_fluct, m_fluct


def quad_mean(params: GaussianParams, angle_deg):
    """``<X_phi> = sqrt(2) Re(alpha e^{-i phi})``; accepts scalar or array angles."""
    phi = _angle_rad(angle_deg)
    return math.sqrt(2.0) * np.real(params.alpha * np.exp(-1j * phi))


def quad_var(params: GaussianParams, angle_deg):
    """``<(dX_phi)^2> = (n+1/2)[cosh 2r - sinh 2r cos(2 phi - theta)]``.

    The variance is smallest along ``phi = theta/2``.
    """
    phi = _angle_rad(angle_deg)
    nu = params.n_thermal + 0.5
    r, theta = params.squeeze.r, params.squeeze.theta
    return nu * (np.cosh(2 * r) - np.sinh(2 * r) * np.cos(2 * phi - theta))


def marginal(params: GaussianParams, angle_deg: float) -> tuple[float, float]:
    """Mean and variance of the Gaussian marginal ``h_phi``."""
    return float(quad_mean(params, angle_deg)), float(quad_var(params, angle_deg))


def moments(params: GaussianParams) -> MomentSet:
    al = params.alpha
    alc = al.conjugate()
    n_f, m_f = _excess(params)
    a2 = al * al + m_f
    n = abs(al) ** 2 + n_f
    ad_ad_a = alc * alc * al + al * m_f.conjugate() + 2 * alc * n_f
    ad_ad_a_a = abs(al) ** 4 + 2 * n_f**2 + abs(m_f) ** 2 + 2 * (alc * alc * m_f).real + 4 * abs(al) ** 2 * n_f
    return MomentSet(
        a=al,
        ad=alc,
        aa=a2,
        adad=a2.conjugate(),
        ad_a=float(n),
        ad_ad_a=ad_ad_a,
        ad_a_a=ad_ad_a.conjugate(),
        ad_ad_a_a=float(ad_ad_a_a),
    )


def covariance(params: GaussianParams) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance of ``(x, p)``; ``var(X_phi) = u^T C u`` with ``u = (cos phi, sin phi)``."""
    nu = params.n_thermal + 0.5
    r, th = params.squeeze.r, params.squeeze.theta
    rot = np.array([[math.cos(th), math.sin(th)], [math.sin(th), -math.cos(th)]])
    cov = nu * (math.cosh(2 * r) * np.eye(2) - math.sinh(2 * r) * rot)
    mean = math.sqrt(2.0) * np.array([params.alpha.real, params.alpha.imag])
    return mean, cov


def params_from_covariance(mean_vec, cov) -> GaussianParams:
    """Invert :func:`covariance`. Raises ``ValueError`` if ``cov`` is not positive definite."""
    mean_vec = np.asarray(mean_vec, dtype=float)
    cov = np.asarray(cov, dtype=float)
    _check_finite(mean_vec=mean_vec, cov=cov)
    cov = 0.5 * (cov + cov.T)
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    det = a * c - b * b
    if a <= 0 or det <= 0:
        raise ValueError(f"covariance is not positive definite: {cov.tolist()}")
    nu = math.sqrt(det)
    # (a - c)/2 = -nu sinh2r cos(theta), b = -nu sinh2r sin(theta)
    mod = math.hypot(0.5 * (a - c), b)
    r = 0.5 * math.asinh(mod / nu)
    theta = math.atan2(-b, -0.5 * (a - c)) if mod > 0 else 0.0
    if nu < 0.5 - 1e-9:
        warnings.warn(f"covariance violates the uncertainty bound (det = {det:.4g} < 1/4); n_thermal clipped to 0")
    return GaussianParams(
        max(nu - 0.5, 0.0),
        SqueezeParam(r, theta),
        complex(mean_vec[0], mean_vec[1]) / math.sqrt(2.0),
    )


def default_extent(params: GaussianParams) -> float:
    """Half-width keeping the 5-sigma ellipse inside the window (never below 4)."""
    mean, cov = covariance(params)
    return max(4.0, float(np.max(np.abs(mean))) + 5.0 * math.sqrt(float(np.linalg.eigvalsh(cov).max())))


def wigner_eval(params: GaussianParams, size_m: int = 101, extent: float | None = None) -> WignerGrid:
    if extent is None:
        extent = default_extent(params)
    if size_m % 2 != 1 or size_m < 3:
        raise ValueError("size_m must be an odd integer >= 3")
    if extent <= 0:
        raise ValueError("extent must be positive")
    mean, cov = covariance(params)
    axis = np.linspace(-extent, extent, size_m)
    xx, pp = np.meshgrid(axis, axis)
    d = np.stack([xx - mean[0], pp - mean[1]], axis=-1)
    q = np.einsum("...i,ij,...j->...", d, np.linalg.inv(cov), d)
    values = np.exp(-0.5 * q) / (TWO_PI * math.sqrt(np.linalg.det(cov)))
    clipped = bool(np.max(np.abs(mean)) + 5.0 * math.sqrt(np.linalg.eigvalsh(cov).max()) > extent)
    return WignerGrid(size_m, float(extent), values, clipped=clipped)


def thermal_population_from_variance(variance: float) -> float:
    """Thermal occupation of an unsqueezed state with quadrature variance ``variance``."""
    return variance - 0.5


def squeezed_thermal_from_extrema(var_max: float, var_min: float) -> tuple[float, float]:
    """``(n_thermal, r)`` from the anti-squeezed and squeezed quadrature variances."""
    if not 0 < var_min <= var_max:
        raise ValueError("need 0 < var_min <= var_max")
    return math.sqrt(var_max * var_min) - 0.5, 0.25 * math.log(var_max / var_min)


def squeezing_db(r: float) -> float:
    return 20.0 * r / math.log(10.0)
