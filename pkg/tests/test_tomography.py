import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CT_STATE, SQUEEZED_STATE
from strategies import gaussian_states
from wignerct.gaussian import VACUUM, GaussianParams, WignerGrid, default_extent, marginal, wigner_eval
from wignerct.metrics import nrmse
from wignerct.tomography import (
    Sinogram,
    fbp,
    gaussian_sinogram,
    radon,
    ramp_filter,
    refit_gaussian,
    sinogram_from_stats,
)

ANGLES36 = np.arange(36) * 5.0


def test_radon_vacuum_profiles():
    g = wigner_eval(VACUUM, 101, 5.0)
    s = radon(g, ANGLES36)
    t = s.axis
    want = np.exp(-t * t) / math.sqrt(math.pi)
    assert np.max(np.abs(s.data - want)) < 2e-3
    # phi-independent
    assert np.max(np.ptp(s.data, axis=0)) < 2e-3
    assert np.allclose(s.data.sum(axis=1) * s.step, 1.0, atol=1e-3)


def test_radon_means_follow_displacement():
    g = wigner_eval(CT_STATE, 101)
    s = radon(g, ANGLES36)
    t = s.axis
    means = (s.data * t).sum(axis=1) / s.data.sum(axis=1)
    want = np.array([marginal(CT_STATE, a)[0] for a in ANGLES36])
    assert np.allclose(want, math.sqrt(2) * abs(CT_STATE.alpha) * np.cos(np.angle(CT_STATE.alpha) - np.radians(ANGLES36)))
    # linear interpolation error bound: a fraction of the pixel step
    assert np.max(np.abs(means - want)) <= 2 * 0.5 * g.step**2


def test_radon_impulse_gives_triangles():
    m = 41
    v = np.zeros((m, m))
    v[25, 13] = 1.0
    g = WignerGrid(m, 4.0, v)
    for a in (0.0, 17.0, 45.0, 90.0, 133.0):
        prof = radon(g, [a]).data[0]
        nz = np.flatnonzero(prof > 1e-14)
        # contiguous support, single peak, linear flanks
        assert np.all(np.diff(nz) == 1)
        peak = np.argmax(prof[nz])
        assert np.all(np.diff(prof[nz][: peak + 1]) >= -1e-12)
        assert np.all(np.diff(prof[nz][peak:]) <= 1e-12)


def test_radon_rejects_empty_and_out_of_range():
    g = wigner_eval(VACUUM, 11, 4.0)
    with pytest.raises(ValueError):
        radon(g, [])
    with pytest.raises(ValueError):
        radon(g, [180.0])


def test_gaussian_sinogram_vacuum():
    s = gaussian_sinogram(VACUUM, ANGLES36, 201, 5.0)
    t = s.axis
    assert np.allclose(s.profiles(), np.exp(-t * t) / math.sqrt(math.pi), atol=1e-14)


def test_gaussian_sinogram_squeezed_variances():
    s = gaussian_sinogram(SQUEEZED_STATE, [0.0, 90.0], 101, 8.0)
    assert s.data[0, 1] == pytest.approx(0.85, abs=0.01)
    assert s.data[1, 1] == pytest.approx(1.79, abs=0.01)


def test_gaussian_sinogram_range_warning():
    with pytest.warns(UserWarning):
        gaussian_sinogram(CT_STATE, [0.0], 101, 2.0)


@pytest.mark.filterwarnings("ignore:profile extends")
@settings(max_examples=25, deadline=None)
@given(gaussian_states())
def test_radon_matches_gaussian_sinogram(p):
    ext = default_extent(p)
    g = wigner_eval(p, 101, ext)
    s = radon(g, ANGLES36)
    ref = gaussian_sinogram(p, ANGLES36, s.bins, s.range_).profiles()
    assert nrmse(s.data, ref) <= 0.01


def test_ramp_filter_shape():
    r = ramp_filter(101, 0.1)
    assert r.size == 256
    # finite-length Ram-Lak leaves only a small DC residue
    assert 0 <= r[0] < 0.01 * r.max()
    # rises with frequency and is tapered to zero at Nyquist
    assert r[10] > r[5] > 0
    assert r[128] == pytest.approx(0.0, abs=1e-12)


def test_fbp_vacuum_roundtrip():
    truth = wigner_eval(VACUUM, 101, 5.0)
    rec = fbp(radon(truth, ANGLES36), 101, 5.0)
    assert nrmse(rec, truth) <= 0.05
    assert rec.values[50, 50] * math.pi == pytest.approx(1.0, abs=0.03)
    assert rec.meta["window"] == "raised-cosine"


def test_fbp_error_decreases_with_angles():
    ext = default_extent(CT_STATE)
    truth = wigner_eval(CT_STATE, 101, ext)
    errs = []
    for n in (2, 4, 6, 9, 12, 18, 36):
        s = gaussian_sinogram(CT_STATE, np.arange(n) * 180.0 / n, 101, ext)
        errs.append(nrmse(fbp(s, 101, ext), truth))
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[0] > 0.1 and errs[-1] < 1e-3


def test_fbp_needs_two_angles():
    s = gaussian_sinogram(VACUUM, [0.0], 51, 5.0)
    with pytest.raises(ValueError):
        fbp(s, 51, 5.0)
    s = gaussian_sinogram(VACUUM, [0.0, 180.0], 51, 5.0)
    with pytest.raises(ValueError):
        fbp(s, 51, 5.0)


def test_sinogram_validation():
    with pytest.raises(ValueError):
        Sinogram([0.0, 10.0], 5, 1.0, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        sinogram_from_stats([0.0], [0.0], [0.0], 11, 5.0)
    a = Sinogram([0.0], 5, 1.0, np.zeros((1, 5)))
    b = Sinogram([0.0], 7, 1.0, np.zeros((1, 7)))
    with pytest.raises(ValueError):
        a + b


def _random_sinogram(rng, angles, bins=61, range_=5.0):
    return Sinogram(angles, bins, range_, rng.random((len(angles), bins)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_fbp_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    angles = np.arange(12) * 15.0
    s1, s2 = _random_sinogram(rng, angles), _random_sinogram(rng, angles)
    lhs = fbp(s1 * a + s2 * b, 61, 5.0, normalize=False).values
    rhs = a * fbp(s1, 61, 5.0, normalize=False).values + b * fbp(s2, 61, 5.0, normalize=False).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=15, deadline=None)
@given(gaussian_states())
def test_fbp_rotation_by_quarter_turn(p):
    ext = default_extent(p)
    angles = np.arange(18) * 10.0
    g = wigner_eval(p, 61, ext)
    s = radon(g, angles)
    base = fbp(s, 61, ext, normalize=False).values
    turned = fbp(Sinogram(angles + 90.0, s.bins, s.range_, s.data), 61, ext, normalize=False).values
    m = 61
    ip, jx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    assert np.allclose(turned, base[m - 1 - jx, ip], atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(gaussian_states())
def test_fbp_dc_consistency(p):
    ext = default_extent(p)
    s = radon(wigner_eval(p, 101, ext), ANGLES36)
    mass = s.data.sum(axis=1) * s.step
    rec = fbp(s, 101, ext, normalize=False)
    assert rec.integral() == pytest.approx(np.mean(mass), abs=1e-2)


def test_fbp_normalized_mass():
    s = gaussian_sinogram(CT_STATE, ANGLES36, 101, default_extent(CT_STATE))
    assert fbp(s, 101, default_extent(CT_STATE)).integral() == pytest.approx(1.0, abs=1e-12)


def test_refit_of_analytic_grid():
    p = refit_gaussian(wigner_eval(CT_STATE, 101))
    assert p.n_thermal == pytest.approx(CT_STATE.n_thermal, abs=1e-3)
    assert abs(p.zeta - CT_STATE.zeta) <= 1e-3
    assert abs(p.alpha - CT_STATE.alpha) <= 1e-3


def test_refit_vacuum():
    p = refit_gaussian(wigner_eval(VACUUM, 101, 5.0))
    assert p.n_thermal == pytest.approx(0.0, abs=1e-3)
    assert abs(p.zeta) == pytest.approx(0.0, abs=1e-3)


def test_refit_rejects_negative_mass():
    g = wigner_eval(VACUUM, 21, 4.0)
    g.values = -g.values
    with pytest.raises(ValueError):
        refit_gaussian(g)


def test_refit_of_fbp_at_36_angles():
    ext = default_extent(CT_STATE)
    s = gaussian_sinogram(CT_STATE, ANGLES36, 101, ext)
    p = refit_gaussian(fbp(s, 101, ext))
    assert isinstance(p, GaussianParams)
    assert p.n_thermal == pytest.approx(0.71, rel=0.05)
    assert abs(p.zeta) == pytest.approx(abs(0.16 - 0.13j), rel=0.05)
    assert abs(p.alpha - (0.55 + 0.25j)) <= 0.03


def test_refit_survives_streaky_grid():
    # 6 angles on a coarse grid: whole-grid moments are not a covariance
    ext = default_extent(CT_STATE)
    g = fbp(gaussian_sinogram(CT_STATE, np.arange(6) * 30.0, 41, ext), 41, ext)
    p = refit_gaussian(g)
    assert p.n_thermal == pytest.approx(CT_STATE.n_thermal, abs=0.15)
    assert abs(p.alpha - CT_STATE.alpha) <= 0.05
