"""Phase-space tomography of Gaussian microwave states from bolometric projections."""

from .gaussian import (
    VACUUM,
    GaussianParams,
    MomentSet,
    QuadratureStats,
    SqueezeParam,
    WignerGrid,
    covariance,
    moments,
    quad_mean,
    quad_var,
    wigner_eval,
)

__version__ = "0.1.0"

__all__ = [
    "VACUUM",
    "GaussianParams",
    "MomentSet",
    "QuadratureStats",
    "SqueezeParam",
    "WignerGrid",
    "covariance",
    "moments",
    "quad_mean",
    "quad_var",
    "wigner_eval",
]
