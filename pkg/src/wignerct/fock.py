"""Truncated Fock-space oracle for the closed forms in :mod:`wignerct.gaussian`.

Everything here is brute force on purpose: density matrices, matrix
exponentials of the ladder-operator generators and traces.  Unitaries are
applied in a padded basis and cropped afterwards, so the error at the top
of the truncated space does not leak into the low levels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .gaussian import MOMENT_IDS, GaussianParams, MomentSet, SqueezeParam

DEFAULT_DIM = 60
TAIL_TOLERANCE = 1e-6


class TruncationWarning(UserWarning):
    """Probability mass was lost to the truncation of the Fock basis."""


@dataclass
class FockState:
    dim: int
    rho: np.ndarray
    tail: float = 0.0  # estimated probability mass outside the basis

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (self.dim, self.dim):
            raise ValueError(f"rho must be {self.dim}x{self.dim}")

    def trace(self) -> float:
        return float(np.trace(self.rho).real)


def _report(tail: float, what: str) -> None:
    if tail > TAIL_TOLERANCE:
        warnings.warn(f"{what}: {tail:.3g} of the probability lies outside the truncated basis", TruncationWarning, stacklevel=3)


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def make_thermal(n_thermal: float, dim: int = DEFAULT_DIM) -> FockState:
    if n_thermal < 0:
        raise ValueError("n_thermal must be >= 0")
    if n_thermal == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return FockState(dim, np.diag(p))
    q = n_thermal / (n_thermal + 1.0)
    p = q ** np.arange(dim)
    tail = q**dim
    _report(tail, "make_thermal")
    return FockState(dim, np.diag(p / p.sum()), tail)


def _conjugate(state: FockState, generator, pad: int | None, what: str) -> FockState:
    pad = state.dim if pad is None else pad
    big = state.dim + pad
    a = annihilation(big)
    u = expm(generator(a, a.conj().T))
    rho = np.zeros((big, big), dtype=complex)
    rho[: state.dim, : state.dim] = state.rho
    rho = u @ rho @ u.conj().T
    out = rho[: state.dim, : state.dim]
    # mass that left the kept block, plus what was already missing
    tail = state.tail + max(float(np.trace(rho).real - np.trace(out).real), 0.0)
    _report(tail, what)
    return FockState(state.dim, out, tail)


def apply_displacement(state: FockState, alpha: complex, pad: int | None = None) -> FockState:
    """``D rho D^dag`` with ``D = exp(alpha a^dag - alpha^* a)``."""
    if alpha == 0:
        return FockState(state.dim, state.rho.copy(), state.tail)
    return _conjugate(state, lambda a, ad: alpha * ad - np.conj(alpha) * a, pad, "apply_displacement")


def apply_squeeze(state: FockState, zeta: SqueezeParam | complex, pad: int | None = None) -> FockState:
    """``S rho S^dag`` with ``S = exp[(zeta^* a^2 - zeta a^dag^2)/2]``."""
    z = zeta.zeta if isinstance(zeta, SqueezeParam) else complex(zeta)
    if z == 0:
        return FockState(state.dim, state.rho.copy(), state.tail)
    return _conjugate(state, lambda a, ad: 0.5 * (np.conj(z) * a @ a - z * ad @ ad), pad, "apply_squeeze")


def make_state(params: GaussianParams, dim: int = DEFAULT_DIM, pad: int | None = None) -> FockState:
    """``D S rho_T S^dag D^dag`` built in a ``dim + pad`` working basis and cropped once to ``dim``."""
    pad = dim if pad is None else pad
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        work = make_thermal(params.n_thermal, dim + pad)
        work = apply_squeeze(work, params.squeeze)
        work = apply_displacement(work, params.alpha)
    out = work.rho[:dim, :dim]
    tail = work.tail + max(work.trace() - float(np.trace(out).real), 0.0)
    _report(tail, "make_state")
    return FockState(dim, out, tail)


_WORDS = {
    "a": ("a",),
    "ad": ("ad",),
    "aa": ("a", "a"),
    "adad": ("ad", "ad"),
    "ad_a": ("ad", "a"),
    "ad_ad_a": ("ad", "ad", "a"),
    "ad_a_a": ("ad", "a", "a"),
    "ad_ad_a_a": ("ad", "ad", "a", "a"),
}
assert set(_WORDS) == set(MOMENT_IDS)


def _operator(which: str, dim: int) -> np.ndarray:
    if which not in _WORDS:
        raise KeyError(f"unknown moment id {which!r}; expected one of {MOMENT_IDS}")
    a = annihilation(dim)
    ops = {"a": a, "ad": a.conj().T}
    out = np.eye(dim, dtype=complex)
    for name in _WORDS[which]:
        out = out @ ops[name]
    return out


def expect(state: FockState, which: str) -> complex:
    """``tr(O rho)`` for a normally ordered moment named as in :class:`MomentSet`."""
    return complex(np.trace(_operator(which, state.dim) @ state.rho))


def fock_moments(state: FockState) -> MomentSet:
    vals = {k: expect(state, k) for k in MOMENT_IDS}
    vals["ad_a"] = vals["ad_a"].real
    vals["ad_ad_a_a"] = vals["ad_ad_a_a"].real
    return MomentSet(**vals)


def quadrature_stats(state: FockState, angle_deg: float) -> tuple[float, float]:
    a = annihilation(state.dim)
    phi = math.radians(angle_deg)
    x = (a.conj().T * np.exp(1j * phi) + a * np.exp(-1j * phi)) / math.sqrt(2)
    m = np.trace(x @ state.rho).real
    # <X^2> from normally ordered pieces to stay exact under truncation
    a2 = np.trace(a @ a @ state.rho)
    n = np.trace(a.conj().T @ a @ state.rho).real
    x2 = (2 * (a2 * np.exp(-2j * phi)).real + 2 * n + 1) / 2
    return float(m), float(x2 - m * m)


def beam_split(state: FockState, beta: complex, gamma_t: float):
    """Photon statistics of ``c = sqrt(G) a + i sqrt(1-G) b`` with ``b`` in ``|beta>``.

    The coherent homodyne mode is never built as a matrix: ``b -> beta`` in
    every normally ordered product, which leaves the single-mode operator
    ``A = sqrt(G) a + i sqrt(1-G) beta``.  ``n_c^2 = c^dag c^dag c c + c^dag c``.
    """
    from .bolometry import PhotonStats

    if not 0 < gamma_t < 1:
        raise ValueError("gamma_t must lie in (0, 1)")
    a = annihilation(state.dim)
    big_a = math.sqrt(gamma_t) * a + 1j * math.sqrt(1 - gamma_t) * beta * np.eye(state.dim)
    big_ad = big_a.conj().T
    mean = np.trace(big_ad @ big_a @ state.rho).real
    second = np.trace(big_ad @ big_ad @ big_a @ big_a @ state.rho).real
    return PhotonStats(float(mean), float(second + mean - mean * mean))


def joint_beam_split(state: FockState, beta: complex, gamma_t: float, dim_b: int = 20):
    """Same as :func:`beam_split` but with the homodyne mode as a full matrix.

    Only meant for small ``|beta|`` and dims; it checks the coherent-state
    reduction used by :func:`beam_split`.
    """
    from .bolometry import PhotonStats

    dim_a = state.dim
    b_state = apply_displacement(FockState(dim_b, np.diag([1.0] + [0.0] * (dim_b - 1))), beta)
    a = np.kron(annihilation(dim_a), np.eye(dim_b))
    b = np.kron(np.eye(dim_a), annihilation(dim_b))
    rho = np.kron(state.rho, b_state.rho)
    c = math.sqrt(gamma_t) * a + 1j * math.sqrt(1 - gamma_t) * b
    cd = c.conj().T
    mean = np.trace(cd @ c @ rho).real
    second = np.trace(cd @ cd @ c @ c @ rho).real
    return PhotonStats(float(mean), float(second + mean - mean * mean))


def fidelity(s1: FockState, s2: FockState) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(r1) r2 sqrt(r1)))^2``."""
    from scipy.linalg import sqrtm

    r1 = sqrtm(s1.rho)
    inner = sqrtm(r1 @ s2.rho @ r1)
    return float(np.trace(inner).real ** 2)
