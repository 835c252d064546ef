import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miscale.exceptions import DimensionError, DominanceError, NotPositiveDefiniteError, UnsupportedOperationError
from miscale.gmrf import (
    GaussianMIEstimator,
    GmrfModel,
    analytic_curve,
    analytic_logit,
    analytic_mi,
    build_nearest_neighbor,
    build_precision,
    build_random_sparse,
    build_uniform,
    check_diagonal_dominance,
    fit_gmrf,
    gaussian_entropy,
    mc_mi_oracle,
    precision_to_covariance,
    sample,
)
from miscale.grid import Bipartition, GridShape, inner_square_partition
from miscale.linalg import jacobi_eigvalsh

RHO_MI = -0.5 * np.log(1 - 0.25)
PAIR = Bipartition((0,), (1,), GridShape(1, 2))


def rho_model(rho=0.5):
    return GmrfModel(mean=np.zeros(2), covariance=np.array([[1.0, rho], [rho, 1.0]]))


# --- construction -------------------------------------------------------------

def test_nn_interior_row_sum():
    Q = build_nearest_neighbor(GridShape(28, 28), -0.227)
    interior = 10 * 28 + 10
    assert Q[interior].sum() == pytest.approx(1 + 4 * (-0.227), abs=1e-12)
    assert Q[interior].sum() == pytest.approx(0.092, abs=1e-12)
    assert np.all(np.diag(Q) == 1.0)
    np.testing.assert_array_equal(Q, Q.T)


def test_nn_zero_is_identity():
    np.testing.assert_array_equal(build_nearest_neighbor(GridShape(28, 28), 0.0), np.eye(784))


def test_nn_2x2():
    Q = build_nearest_neighbor(GridShape(2, 2), -0.2)
    for row in Q:
        off = np.delete(row, np.argmax(row == 1.0))
        assert np.sum(off == -0.2) == 2


def test_nn_edge_neighbour_counts():
    Q = build_nearest_neighbor(GridShape(3, 4), 0.1)
    counts = (Q != 0).sum(axis=1) - 1
    assert counts.reshape(3, 4).tolist() == [[2, 3, 3, 2], [3, 4, 4, 3], [2, 3, 3, 2]]


@pytest.mark.parametrize("q", [0.25, -0.25, 0.3])
def test_nn_dominance_error(q):
    with pytest.raises(DominanceError):
        build_nearest_neighbor(GridShape(4, 4), q)


def test_uniform_reference_values():
    for q in (-1.27712e-3, -1.2e-3):
        Q = build_uniform(784, q)
        assert check_diagonal_dominance(Q)
        assert abs(q) * 783 < 1
    assert abs(-1.27712e-3) * 783 == pytest.approx(0.99998, abs=1e-5)


def test_uniform_zero_identity_zero_mi():
    cov = precision_to_covariance(build_uniform(16, 0.0))
    np.testing.assert_array_equal(cov, np.eye(16))
    assert analytic_mi(cov, inner_square_partition(GridShape(4, 4), 2)) == 0.0


def test_uniform_dominance_error():
    with pytest.raises(DominanceError):
        build_uniform(784, -1.3e-3)


def test_dominance_check():
    assert check_diagonal_dominance(np.eye(4))
    Q = np.full((784, 784), -1.3e-3)
    np.fill_diagonal(Q, 1.0)
    assert 783 * 1.3e-3 == pytest.approx(1.0179)
    assert not check_diagonal_dominance(Q)


def test_random_sparse_spectrum_and_counts():
    shape = GridShape(28, 28)
    Qnn = build_nearest_neighbor(shape, -0.11)
    Qr = build_random_sparse(shape, -0.11, seed=7)
    np.testing.assert_allclose(np.linalg.eigvalsh(Qr), np.linalg.eigvalsh(Qnn), atol=1e-8)
    assert sorted(((Qr != 0).sum(axis=1) - 1).tolist()) == sorted(((Qnn != 0).sum(axis=1) - 1).tolist())
    assert not np.array_equal(Qr, Qnn)
    build_random_sparse(shape, -0.045, seed=1)


def test_random_sparse_permutation_semantics():
    shape = GridShape(3, 3)
    perm = np.random.default_rng(0).permutation(9)
    Qnn = build_nearest_neighbor(shape, -0.2)
    Qr = build_random_sparse(shape, -0.2, seed=0, permutation=perm)
    P = np.eye(9)[perm]
    # P Q P^T with P[k, perm[k]] = 1 maps old k to new perm[k]
    np.testing.assert_array_equal(Qr, P.T @ Qnn @ P)
    for i in range(9):
        for j in range(9):
            assert Qr[perm[i], perm[j]] == Qnn[i, j]


def test_random_sparse_identity_permutation():
    shape = GridShape(5, 5)
    np.testing.assert_array_equal(
        build_random_sparse(shape, -0.2, seed=0, permutation=np.arange(25)), build_nearest_neighbor(shape, -0.2)
    )


@given(st.integers(0, 2**32 - 1))
def test_random_sparse_spectra_property(seed):
    shape = GridShape(6, 7)
    a = jacobi_eigvalsh(build_random_sparse(shape, -0.2, seed))
    b = jacobi_eigvalsh(build_nearest_neighbor(shape, -0.2))
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_build_precision_dispatch():
    assert build_precision("uniform", "3x3", 0.05).shape == (9, 9)
    with pytest.raises(ValueError):
        build_precision("checkerboard", "3x3", 0.1)


# --- covariance, entropy, MI ---------------------------------------------------

def test_precision_to_covariance_examples():
    np.testing.assert_array_equal(precision_to_covariance(np.eye(3)), np.eye(3))
    q = 0.3
    S = precision_to_covariance(np.array([[1.0, q], [q, 1.0]]))
    np.testing.assert_allclose(S, np.array([[1.0, -q], [-q, 1.0]]) / (1 - q * q), atol=1e-14)
    S = precision_to_covariance(build_uniform(10, -0.05))
    off = S[~np.eye(10, dtype=bool)]
    np.testing.assert_allclose(off, off[0], rtol=1e-12)


def test_precision_covariance_inverse():
    Q = build_nearest_neighbor(GridShape(8, 8), -0.24)
    S = precision_to_covariance(Q)
    assert np.abs(Q @ S - np.eye(64)).max() < 1e-8
    np.testing.assert_array_equal(S, S.T)


def test_entropy_examples():
    assert gaussian_entropy([[1.0]]) == pytest.approx(0.5 * np.log(2 * np.pi * np.e), abs=1e-15)
    assert gaussian_entropy([[1.0]]) == pytest.approx(1.418939, abs=1e-6)
    s2 = 2.5
    assert gaussian_entropy(np.eye(4) * s2) == pytest.approx(4 * 0.5 * np.log(2 * np.pi * np.e * s2), abs=1e-12)
    assert gaussian_entropy(rho_model().covariance) == pytest.approx(2 * 1.4189385 + 0.5 * np.log(0.75), abs=1e-6)
    assert gaussian_entropy(rho_model().covariance) == pytest.approx(2.694037, abs=1e-6)


def test_analytic_mi_examples():
    assert abs(analytic_mi(np.eye(36), inner_square_partition("6x6", 2))) < 1e-12
    assert analytic_mi(rho_model().covariance, PAIR) == pytest.approx(RHO_MI, abs=1e-12)
    assert RHO_MI == pytest.approx(0.143841, abs=1e-6)
    with pytest.raises(DimensionError):
        analytic_mi(np.eye(5), inner_square_partition("2x2", 1))


def test_analytic_mi_is_entropy_difference():
    S = precision_to_covariance(build_nearest_neighbor(GridShape(5, 5), -0.2))
    p = inner_square_partition("5x5", 3)
    a, b = p.inner_index, p.outer_index
    via_entropy = (gaussian_entropy(S[np.ix_(a, a)]) + gaussian_entropy(S[np.ix_(b, b)]) - gaussian_entropy(S))
    assert analytic_mi(S, p) == pytest.approx(via_entropy, abs=1e-12)


def test_uniform_volume_law_peak():
    S = precision_to_covariance(build_uniform(784, -1.27712e-3))
    curve = analytic_curve(S, "28x28", range(1, 27))
    assert int(np.argmax(curve)) + 1 in (19, 20, 21)


@st.composite
def pd_and_partition(draw):
    h = draw(st.integers(2, 5))
    w = draw(st.integers(2, 5))
    shape = GridShape(h, w)
    seed = draw(st.integers(0, 2**32 - 1))
    A = np.random.default_rng(seed).normal(size=(shape.total, shape.total))
    S = A @ A.T + 0.1 * np.eye(shape.total)
    L = draw(st.integers(1, min(h, w) - 1))
    return S, inner_square_partition(shape, L)


@given(pd_and_partition())
def test_mi_symmetric_and_nonnegative(sp):
    S, p = sp
    mi = analytic_mi(S, p)
    assert mi >= -1e-10
    assert analytic_mi(S, p.swapped()) == mi


@given(pd_and_partition())
def test_block_diagonal_zero_mi(sp):
    S, p = sp
    a, b = p.inner_index, p.outer_index
    B = np.zeros_like(S)
    B[np.ix_(a, a)] = S[np.ix_(a, a)]
    B[np.ix_(b, b)] = S[np.ix_(b, b)]
    assert gaussian_entropy(B) == pytest.approx(
        gaussian_entropy(S[np.ix_(a, a)]) + gaussian_entropy(S[np.ix_(b, b)]), abs=1e-10)
    assert abs(analytic_mi(B, p)) < 1e-10


def test_monotone_coupling():
    p = inner_square_partition("6x6", 2)
    mis = [analytic_mi(precision_to_covariance(build_nearest_neighbor(GridShape(6, 6), -q)), p)
           for q in np.linspace(0.0, 0.24, 13)]
    assert np.all(np.diff(mis) > 0)


def test_mi_mean_invariant():
    m = GmrfModel.from_family("nearest_neighbor", "4x4", -0.2)
    shifted = GmrfModel.from_precision(m.precision, mean=np.arange(16.0))
    p = inner_square_partition("4x4", 2)
    X0 = sample(m, 50, 3)
    X1 = sample(shifted, 50, 3)
    np.testing.assert_allclose(X1 - X0, np.tile(np.arange(16.0), (50, 1)), atol=1e-12)
    np.testing.assert_allclose(analytic_logit(m, p)(*_split(X0, p)), analytic_logit(shifted, p)(*_split(X1, p)),
                               atol=1e-10)


def _split(X, p):
    return X[:, p.inner_index], X[:, p.outer_index]


# --- sampling and fitting ------------------------------------------------------

def test_sample_identity_covariance():
    m = GmrfModel.from_precision(np.eye(10))
    X = sample(m, 100_000, 0)
    assert np.abs(np.cov(X.T) - np.eye(10)).max() < 0.05


def test_sample_deterministic():
    m = GmrfModel.from_family("nearest_neighbor", "4x4", -0.2)
    np.testing.assert_array_equal(sample(m, 100, 42), sample(m, 100, 42))
    assert not np.array_equal(sample(m, 100, 42), sample(m, 100, 43))


@pytest.mark.slow
def test_sample_nn_covariance_1e6():
    m = GmrfModel.from_family("nearest_neighbor", "6x6", -0.2)
    S = m.covariance
    C = np.cov(sample(m, 1_000_000, 1).T)
    # sampling standard error of each covariance entry
    se = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / 1_000_000)
    assert np.abs((C - S) / se).max() < 5.5
    resolvable = (np.abs(S) > 0.05) & (0.02 * np.abs(S) >= 4 * se)
    assert resolvable.sum() >= 36
    assert (np.abs(C - S)[resolvable] / np.abs(S)[resolvable]).max() < 0.02


def test_sample_needs_precision():
    fitted = fit_gmrf(np.random.default_rng(0).normal(size=(20, 3)))
    with pytest.raises(UnsupportedOperationError):
        sample(fitted, 5, 0)


def test_fit_identity():
    X = np.random.default_rng(1).normal(size=(50_000, 6))
    m = fit_gmrf(X, ridge=0.0)
    assert np.abs(m.covariance - np.eye(6)).max() < 0.03
    np.testing.assert_allclose(m.mean, X.mean(axis=0))
    np.testing.assert_allclose(m.covariance, np.cov(X.T), atol=1e-15)
    assert m.precision is None


def test_fit_constant_column_ridge():
    X = np.random.default_rng(2).normal(size=(100, 4))
    X[:, 2] = 0.7
    m = fit_gmrf(X, ridge=1e-4)
    assert m.covariance[2, 2] == pytest.approx(1e-4, abs=1e-18)
    np.linalg.cholesky(m.covariance)


def test_fit_singular_without_ridge():
    with pytest.raises(NotPositiveDefiniteError):
        fit_gmrf(np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]), ridge=0.0)


def test_fit_two_rows():
    m = fit_gmrf(np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 5.0]]), ridge=1e-3)
    np.linalg.cholesky(m.covariance)
    with pytest.raises(DimensionError):
        fit_gmrf(np.zeros((1, 3)))


def test_fit_converges():
    m = GmrfModel.from_family("nearest_neighbor", "6x6", -0.2)
    p = inner_square_partition("6x6", 2)
    truth = analytic_mi(m.covariance, p)
    errs = [abs(analytic_mi(fit_gmrf(sample(m, N, 11), ridge=0.0).covariance, p) - truth)
            for N in (1_000, 10_000, 100_000)]
    assert errs[0] > errs[1] > errs[2]


def test_gaussian_mi_estimator():
    m = GmrfModel.from_family("nearest_neighbor", "6x6", -0.2)
    X = sample(m, 20_000, 4)
    est = GaussianMIEstimator(shape=(6, 6), ridge=0.0).fit(X)
    truth = analytic_curve(m.covariance, "6x6", [1, 2, 3])
    np.testing.assert_allclose(est.scaling_curve([1, 2, 3]), truth, rtol=0.1)
    assert est.get_params() == {"shape": (6, 6), "ridge": 0.0}


# --- oracles -------------------------------------------------------------------

def test_mc_oracle_identity():
    m = GmrfModel.from_precision(np.eye(4))
    est, se = mc_mi_oracle(m, inner_square_partition("2x2", 1), 10_000, 0)
    assert est == 0.0 or abs(est) < 1e-12
    assert se < 1e-10


def test_mc_oracle_rho():
    est, se = mc_mi_oracle(rho_model(), PAIR, 1_000_000, 3)
    assert abs(est - RHO_MI) < 3 * se
    assert abs(est - 0.1438) < 3 * se + 5e-5


def test_mc_oracle_nn_6x6():
    m = GmrfModel.from_family("nearest_neighbor", "6x6", -0.2)
    p = inner_square_partition("6x6", 2)
    est, se = mc_mi_oracle(m, p, 1_000_000, 5)
    truth = analytic_mi(m.covariance, p)
    assert abs(est - truth) <= max(0.02 * truth, 3 * se)


def test_analytic_logit_values():
    m = GmrfModel.from_precision(np.eye(4))
    p = inner_square_partition("2x2", 1)
    T = analytic_logit(m, p)
    X = np.random.default_rng(0).normal(size=(20, 4))
    np.testing.assert_allclose(T(*_split(X, p)), 0.0, atol=1e-12)
    T = analytic_logit(rho_model(), PAIR)
    assert T(np.zeros((1, 1)), np.zeros((1, 1)))[0] == pytest.approx(RHO_MI, abs=1e-12)


def test_analytic_logit_matches_scipy_densities():
    from scipy.stats import multivariate_normal

    m = GmrfModel.from_family("random_sparse", "4x4", -0.2, seed=3)
    p = inner_square_partition("4x4", 2)
    X = sample(m, 30, 1)
    a, b = _split(X, p)
    ref = (multivariate_normal(m.mean, m.covariance).logpdf(X)
           - multivariate_normal(*m.marginal(p.inner_index)).logpdf(a)
           - multivariate_normal(*m.marginal(p.outer_index)).logpdf(b))
    T = analytic_logit(m, p)
    np.testing.assert_allclose(T(a, b), ref, atol=1e-10)
    np.testing.assert_allclose(np.diag(T.cross(a, b)), ref, atol=1e-10)
    C = T.cross(a, b)
    for i, j in [(0, 5), (7, 2), (29, 0)]:
        assert C[i, j] == pytest.approx(T(a[i:i + 1], b[j:j + 1])[0], abs=1e-10)
