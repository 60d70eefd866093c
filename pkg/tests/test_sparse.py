import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CT_STATE
from wignerct.bolometry import ChainConfig
from wignerct.gaussian import VACUUM, covariance, default_extent, wigner_eval
from wignerct.metrics import nrmse
from wignerct.pipeline import chain_stats, projection_angles
from wignerct.sparse import (
    SolverConfig,
    SolverError,
    SparseBasis,
    build_measurement,
    dct2_analysis,
    dct2_synthesis,
    default_config,
    dwt2_analysis,
    dwt2_synthesis,
    lipschitz,
    soft_threshold,
    solve,
)
from wignerct.tomography import fbp, gaussian_sinogram, radon, refit_gaussian, sinogram_from_stats
from wignerct.wavelets import daubechies_filter, dwt, dwt2, idwt, idwt2, wavelet_filter

M = 101
EXT = default_extent(CT_STATE)


# --- bases -----------------------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dct_parseval_and_identity(seed):
    g = np.random.default_rng(seed).standard_normal((M, M))
    c = dct2_analysis(g)
    assert abs(np.sum(c * c) - np.sum(g * g)) <= 1e-10 * np.sum(g * g)
    assert np.max(np.abs(dct2_synthesis(c) - g)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 4))
def test_wavelet_parseval_and_identity(seed, order, levels):
    g = np.random.default_rng(seed).standard_normal((M, M))
    c = dwt2_analysis(g, order, levels)
    assert abs(np.sum(c * c) - np.sum(g * g)) <= 1e-10 * np.sum(g * g)
    assert np.max(np.abs(dwt2_synthesis(c, M, order, levels) - g)) <= 1e-10


def test_haar_pairs():
    c = dwt([1.0, 1.0, 1.0, 1.0], order=1, levels=1)
    assert np.allclose(c, [math.sqrt(2), math.sqrt(2), 0, 0], atol=1e-15)


def test_db2_closed_form():
    s3 = math.sqrt(3)
    want = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * math.sqrt(2))
    assert np.allclose(daubechies_filter(2), want, atol=1e-14)


@pytest.mark.parametrize("order", [1, 2, 4, 6, 10, 20])
def test_filters_orthonormal(order):
    h = daubechies_filter(order)
    g = wavelet_filter(h)
    assert h.sum() == pytest.approx(math.sqrt(2), abs=1e-12)
    for k in range(order):
        shifted = np.dot(h[2 * k :], h[: h.size - 2 * k])
        assert shifted == pytest.approx(1.0 if k == 0 else 0.0, abs=1e-10)
        assert np.dot(g[2 * k :], h[: h.size - 2 * k]) == pytest.approx(0.0, abs=1e-10)
    # vanishing moments of the wavelet filter
    n = np.arange(g.size, dtype=float)
    for p in range(order):
        assert abs(np.sum(g * n**p)) <= 1e-7 * np.sum(np.abs(g) * n**p)


def test_db4_perfect_reconstruction_128():
    x = np.random.default_rng(1).standard_normal((128, 128))
    assert np.max(np.abs(idwt2(dwt2(x, 4, 3), 4, 3) - x)) <= 1e-10
    v = np.random.default_rng(2).standard_normal(128)
    assert np.max(np.abs(idwt(dwt(v, 4, 5), 4, 5) - v)) <= 1e-10


def test_wavelet_bad_arguments():
    with pytest.raises(ValueError):
        daubechies_filter(0)
    with pytest.raises(ValueError):
        dwt(np.ones(12), 2, 3)
    with pytest.raises(ValueError):
        SparseBasis("fourier")


def test_constant_grid_dct_is_dc_only():
    c = dct2_analysis(np.full((M, M), 2.5))
    assert c[0, 0] == pytest.approx(2.5 * M)
    c[0, 0] = 0
    assert np.max(np.abs(c)) < 1e-12


def test_dct_energy_in_low_block():
    c = dct2_analysis(wigner_eval(CT_STATE, M, EXT).values)
    e = c * c
    assert e[:10, :10].sum() / e.sum() >= 0.99


def _count_for(coeffs, fraction=0.99):
    e = np.sort(coeffs.ravel() ** 2)[::-1]
    return int(np.searchsorted(np.cumsum(e) / e.sum(), fraction)) + 1


def test_wavelet_compaction_comparable_to_dct():
    # coefficients needed to hold 99% of the energy, default db4 with 3 levels
    g = wigner_eval(CT_STATE, M, EXT).values
    n_dct = _count_for(dct2_analysis(g))
    n_wav = _count_for(SparseBasis("daubechies").analysis(g))
    assert 0.5 <= n_wav / n_dct <= 2.0, f"dct {n_dct} vs wavelet {n_wav} coefficients"


# --- measurement matrix -------------------------------------------------------------------


def test_matrix_matches_radon_random_angles():
    g = wigner_eval(CT_STATE, M, EXT)
    rng = np.random.default_rng(7)
    for phi in rng.uniform(0, 180, 10):
        a = build_measurement([phi], M, EXT).matrix
        assert np.max(np.abs(a @ g.values.ravel() - radon(g, [phi]).data[0])) <= 1e-10


def test_zero_angle_row_is_column_sum():
    g = wigner_eval(VACUUM, M, 5.0)
    a = build_measurement([0.0], M, 5.0).matrix
    assert np.allclose(a @ g.values.ravel(), g.values.sum(axis=0) * g.step, atol=1e-12)


def test_matrix_sparsity():
    a = build_measurement(np.arange(9) * 20.0 + 3.0, M, EXT).matrix.tocsr()
    assert a.shape == (9 * M, M * M)
    assert np.max(np.diff(a.indptr)) <= 2 * M


# --- soft threshold ------------------------------------------------------------------------


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    v = np.array([1.5, -2.0, 0.0])
    assert np.array_equal(soft_threshold(v, 0.0), v)
    with pytest.raises(ValueError):
        soft_threshold(v, -1e-3)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.floats(0, 1e3))
def test_soft_threshold_is_shrinkage(v, lam):
    v = np.array(v)
    out = soft_threshold(v, lam)
    assert np.all(np.abs(out) <= np.abs(v))
    assert np.all(out * v >= 0)
    assert np.allclose(np.abs(v) - np.abs(out), np.minimum(np.abs(v), lam), atol=1e-9 * (1 + np.abs(v)))


# --- solvers -------------------------------------------------------------------------------


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig("newton")
    with pytest.raises(ValueError):
        SolverConfig("l1_min", max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig("l1_min", tol=-1)
    assert default_config("iterative_threshold").kind == "iterative_threshold"


def test_lipschitz_bounds_operator_norm():
    a = build_measurement([0.0, 60.0, 120.0], 31, 4.0).matrix
    sv = np.linalg.svd(a.toarray(), compute_uv=False)[0]
    assert sv**2 <= lipschitz(a) <= 1.05 * sv**2


def test_solver_rejects_overdetermined_and_missing_rhs():
    sysm = build_measurement(np.arange(40) * 4.5, 31, 4.0)
    with pytest.raises(ValueError):
        solve(sysm, SparseBasis(), default_config())
    sysm = build_measurement([0.0, 90.0], 31, 4.0)
    with pytest.raises(ValueError):
        solve(sysm, SparseBasis(), default_config())


def test_iht_rejects_large_step():
    g = wigner_eval(VACUUM, 31, 4.0)
    sysm = build_measurement([0.0, 60.0, 120.0], 31, 4.0)
    sysm = sysm.with_rhs(sysm.matrix @ g.values.ravel())
    with pytest.raises(SolverError):
        solve(sysm, SparseBasis(), SolverConfig("iterative_threshold", step=1.5))


def _system(n, stats=None):
    angles = np.arange(n) * 180.0 / n
    if stats is None:
        s = gaussian_sinogram(CT_STATE, angles, M, EXT)
    else:
        angles = [q.angle_deg for q in stats]
        s = sinogram_from_stats(angles, [q.mean for q in stats], [q.variance for q in stats], M, EXT)
    return build_measurement(angles, M, EXT).with_rhs(s.profiles().ravel()), s


@pytest.fixture(scope="module")
def n9_results():
    sysm, _ = _system(9)
    return {kind: solve(sysm, SparseBasis("dct2"), default_config(kind)) for kind in ("l1_min", "iterative_threshold")}


def test_objective_monotone(n9_results):
    trace = np.array(n9_results["l1_min"].diagnostics["objective"])
    assert np.all(np.diff(trace[5:]) <= 1e-12 * np.abs(trace[5:-1]))


@pytest.mark.parametrize("kind", ["l1_min", "iterative_threshold"])
def test_data_consistency(n9_results, kind):
    d = n9_results[kind].diagnostics
    assert d["success"]
    assert d["residual"] <= default_config(kind).tol


@pytest.mark.parametrize("kind", ["l1_min", "iterative_threshold"])
def test_nine_angle_dct_refit(n9_results, kind):
    p = refit_gaussian(n9_results[kind].grid)
    assert p.n_thermal == pytest.approx(CT_STATE.n_thermal, rel=0.1)
    assert abs(p.zeta) == pytest.approx(abs(CT_STATE.zeta), rel=0.1)
    assert abs(p.alpha - CT_STATE.alpha) <= 0.1 * abs(CT_STATE.alpha)


def test_full_sampling_matches_fbp():
    sysm, s = _system(36)
    res = solve(sysm, SparseBasis("dct2"), default_config("l1_min"))
    assert nrmse(res.grid, fbp(s, M, EXT)) <= 0.05


def test_exact_sparsity_recovery():
    rng = np.random.default_rng(11)
    c = np.zeros((M, M))
    idx = rng.choice(100, 20, replace=False)
    c[idx // 10, idx % 10] = rng.standard_normal(20)
    truth = dct2_synthesis(c)
    angles = np.arange(9) * 20.0
    sysm = build_measurement(angles, M, EXT)
    sysm = sysm.with_rhs(sysm.matrix @ truth.ravel())
    res = solve(sysm, SparseBasis("dct2"), default_config("l1_min"))
    assert nrmse(res.grid.values, truth) <= 1e-3


def spurious_energy(values, params, extent, k=5.0):
    """Fraction of the squared grid weight lying outside the k-sigma ellipse of ``params``."""
    mean, cov = covariance(params)
    axis = np.linspace(-extent, extent, values.shape[0])
    xx, pp = np.meshgrid(axis, axis)
    d = np.stack([xx - mean[0], pp - mean[1]], axis=-1)
    r2 = np.einsum("...i,ij,...j->...", d, np.linalg.inv(cov), d)
    e = values * values
    return float(e[r2 > k * k].sum() / e.sum())


@pytest.mark.filterwarnings("ignore:profile extends")
def test_dct_fewer_spurious_features_than_wavelet():
    stats = chain_stats(CT_STATE, ChainConfig(), 15.3, projection_angles(9))
    sysm, _ = _system(9, stats)
    cfg = default_config("l1_min")
    dct = solve(sysm, SparseBasis("dct2"), cfg).grid
    wav = solve(sysm, SparseBasis("daubechies"), cfg).grid
    e_dct = spurious_energy(dct.values, CT_STATE, EXT)
    e_wav = spurious_energy(wav.values, CT_STATE, EXT)
    assert e_dct < e_wav, f"outside-ellipse energy: dct {e_dct:.3g}, wavelet {e_wav:.3g}"
