"""Principal component decomposition against dense-grid references."""

import numpy as np
import pytest

from fcurve.errors import ConfigError, DataError
from fcurve.fpca import FpcaResult, fit_fpca
from fcurve.smooth import FunctionalDataset

import oracles
import synthdata

AGES = synthdata.AGES


def spiked_dataset(basis, n=50, variances=(5.0, 2.5, 1.2, 0.6, 0.3), seed=0):
    """Curves drawn from a known low-rank covariance plus tiny jitter."""
    p = basis.dimension
    _, inv_half = basis.gram_factors
    rng = np.random.default_rng(seed)
    mean = rng.normal(0.0, 1.0, p)
    V, _ = np.linalg.qr(rng.normal(size=(p, len(variances))))
    z = rng.normal(size=(n, len(variances))) * np.sqrt(variances)
    X = mean + z @ V.T + rng.normal(0.0, 0.01, (n, p))
    return FunctionalDataset(basis, X @ inv_half,
                             synthdata.synthetic_keys(n), np.zeros(n), AGES)


def greville(basis):
    kv = basis.knot_vector
    return np.asarray([kv[i + 1:i + basis.order].mean()
                       for i in range(basis.dimension)])


@pytest.fixture(scope="module")
def spiked(basis31):
    return spiked_dataset(basis31)


@pytest.fixture(scope="module")
def decomposition(spiked):
    return fit_fpca(spiked)


# --- oracle comparisons -------------------------------------------------------

def test_eigenvalues_match_dense_pca(spiked, decomposition):
    ref_vals, _, _, _ = oracles.dense_pca_oracle(
        spiked.basis, spiked.coefficients, points=2001, top=5)
    mine = decomposition.eigenvalues[:5]
    assert np.abs(mine - ref_vals).max() < 1e-4 * ref_vals[0]
    rel = np.abs(mine - ref_vals) / ref_vals
    assert rel.max() < 1e-4


def test_eigenfunctions_match_dense_pca(spiked, decomposition):
    ref_vals, ref_funcs, grid, weights = oracles.dense_pca_oracle(
        spiked.basis, spiked.coefficients, points=2001, top=5)
    design = oracles.scipy_design(spiked.basis, grid)
    for l in range(5):
        mine = design @ decomposition.components[:, l]
        ref = ref_funcs[:, l]
        sign = 1.0 if float(weights @ (mine * ref)) >= 0.0 else -1.0
        err = np.sqrt(weights @ (mine - sign * ref) ** 2)
        assert err < 1e-4


def test_scores_match_quadrature(spiked, basis31):
    # The absolute tolerance is set for curves at the package's working
    # magnitude (death densities peak near 0.04), so the synthetic
    # curves are brought down to that scale first.
    scaled = FunctionalDataset(basis31, spiked.coefficients * 0.01,
                               spiked.keys, spiked.lambdas, spiked.ages)
    result = fit_fpca(scaled)
    for l in range(5):
        ref = oracles.score_quadrature_oracle(
            scaled.basis, scaled.coefficients,
            result.mean_coefficients,
            result.components[:, l], points=2001)
        assert np.abs(result.scores[:, l] - ref).max() < 1e-6


def test_trace_identity(spiked, decomposition):
    n = len(spiked)
    centered = spiked.coefficients - decomposition.mean_coefficients
    total = sum(spiked.basis.inner(row, row) for row in centered) / (n - 1)
    assert abs(decomposition.eigenvalues.sum() - total) < 1e-8 * total


# --- structural invariants ------------------------------------------------------

def test_components_are_orthonormal(spiked, decomposition):
    W = spiked.basis.gram
    G = decomposition.components.T @ W @ decomposition.components
    assert np.abs(G - np.eye(spiked.dimension)).max() < 1e-8


def test_score_moments(decomposition):
    means = decomposition.scores.mean(axis=0)
    assert np.abs(means).max() < 1e-8
    variances = decomposition.scores.var(axis=0, ddof=1)
    for var, ev in zip(variances[:5], decomposition.eigenvalues[:5]):
        assert abs(var - ev) < 1e-6 * max(ev, 1e-12)


def test_eigenvalues_sorted_and_ratios_sum_to_one(decomposition):
    ev = decomposition.eigenvalues
    assert np.all(ev[:-1] >= ev[1:] - 1e-12)
    assert ev.min() >= 0.0
    assert abs(decomposition.variance_ratio.sum() - 1.0) < 1e-12
    assert np.array_equal(decomposition.variance_ratio,
                          ev / ev.sum())


def test_sign_convention_prefers_positive_integrals(spiked, decomposition):
    integrals = decomposition.components.T @ (
        spiked.basis.gram @ np.ones(spiked.dimension))
    assert integrals.min() > -1e-12


def test_sign_fallback_for_zero_integral_components(basis31):
    # Curves mean +/- (t - 55): the only component is proportional to
    # t - 55, whose integral over [0, 110] vanishes, so the grid rule
    # applies and the first age grid point (the largest magnitude) is
    # made positive.
    direction = greville(basis31) - 55.0
    mean = np.ones(basis31.dimension)
    coeffs = np.vstack([mean + direction, mean - direction])
    ds = FunctionalDataset(basis31, coeffs, synthdata.synthetic_keys(2),
                           np.zeros(2), AGES)
    result = fit_fpca(ds)
    phi = result.components[:, 0]
    integral = phi @ basis31.gram @ np.ones(basis31.dimension)
    assert abs(integral) < 1e-9
    grid = np.linspace(0.0, 110.0, 1001)
    values = basis31.curve_values(phi, grid)
    assert values[np.argmax(np.abs(values))] > 0.0
    # scores flip together with the component
    recon = result.reconstruct(result.scores[0, :1], 1)
    assert basis31.norm(recon - coeffs[0]) < 1e-8


# --- reconstruction and effects --------------------------------------------------

def test_full_reconstruction(spiked, decomposition):
    p = spiked.dimension
    for i in range(len(spiked)):
        recon = decomposition.reconstruct(decomposition.scores[i], p)
        assert spiked.basis.norm(recon - spiked.coefficients[i]) < 1e-8


def test_zero_component_reconstruction_is_the_mean(decomposition):
    recon = decomposition.reconstruct(np.zeros(0), 0)
    assert np.array_equal(recon, decomposition.mean_coefficients)


def test_reconstruct_validation(decomposition):
    p = decomposition.dimension
    with pytest.raises(ConfigError):
        decomposition.reconstruct(np.zeros(p + 1), p + 1)
    with pytest.raises(ConfigError):
        decomposition.reconstruct(np.zeros(3), 2)


def test_truncated_scores(decomposition):
    top = decomposition.truncated_scores(3)
    assert top.shape == (decomposition.n_curves, 3)
    assert np.array_equal(top, decomposition.scores[:, :3])
    top[0, 0] = 1e9  # a copy, not a view
    assert decomposition.scores[0, 0] != 1e9
    with pytest.raises(ConfigError):
        decomposition.truncated_scores(0)
    with pytest.raises(ConfigError):
        decomposition.truncated_scores(decomposition.dimension + 1)


def test_harmonic_effect_algebra(decomposition):
    plus, minus = decomposition.harmonic_effect(1, multiple=2.0)
    step = plus - decomposition.mean_coefficients
    expected = 2.0 * np.sqrt(decomposition.eigenvalues[0]) \
        * decomposition.components[:, 0]
    assert np.abs(step - expected).max() < 1e-12
    assert np.abs((plus + minus) / 2.0
                  - decomposition.mean_coefficients).max() < 1e-12

    same_plus, same_minus = decomposition.harmonic_effect(1, multiple=0.0)
    assert np.array_equal(same_plus, same_minus)
    with pytest.raises(ConfigError):
        decomposition.harmonic_effect(0)
    with pytest.raises(ConfigError):
        decomposition.harmonic_effect(decomposition.dimension + 1)


# --- degenerate inputs ------------------------------------------------------------

def test_identical_curves_have_zero_spectrum(basis31):
    row = np.linspace(0.0, 1.0, basis31.dimension)
    coeffs = np.tile(row, (5, 1))
    ds = FunctionalDataset(basis31, coeffs, synthdata.synthetic_keys(5),
                           np.zeros(5), AGES)
    result = fit_fpca(ds)
    assert np.abs(result.eigenvalues).max() < 1e-12
    assert np.abs(result.scores).max() < 1e-6
    assert np.array_equal(result.variance_ratio,
                          np.zeros(basis31.dimension))
    assert np.abs(result.mean_coefficients - row).max() < 1e-12


def test_fpca_input_validation(basis31):
    row = np.zeros((1, basis31.dimension))
    ds = FunctionalDataset(basis31, row, synthdata.synthetic_keys(1),
                           np.zeros(1), AGES)
    with pytest.raises(DataError):
        fit_fpca(ds)
    with pytest.raises(ConfigError):
        fit_fpca("not a dataset")


def test_result_is_immutable(decomposition):
    assert isinstance(decomposition, FpcaResult)
    with pytest.raises(AttributeError):
        decomposition.eigenvalues = None
