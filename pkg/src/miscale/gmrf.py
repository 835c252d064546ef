"""Gaussian Markov random fields with analytically known bipartite MI.

Three precision-matrix families on a pixel grid (nearest-neighbour,
uniform, randomly permuted nearest-neighbour), precision-Cholesky
sampling, Gaussian fitting, and the closed-form Gaussian mutual
information used as ground truth for every estimator test.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._rng import make_rng
from .exceptions import DimensionError, DominanceError, UnsupportedOperationError
from .grid import GridShape, inner_square_partition
from .linalg import cho_solve, cholesky, log_det

LOG_2PI_E = np.log(2.0 * np.pi * np.e)
LOG_2PI = np.log(2.0 * np.pi)

FAMILIES = ("nearest_neighbor", "uniform", "random_sparse")


def _grid_neighbours(shape):
    """Flat index pairs ``(i, j)``, ``i < j``, of 4-neighbours on the grid."""
    idx = np.arange(shape.total).reshape(shape.height, shape.width)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.concatenate([right, down])


def build_nearest_neighbor(shape, q):
    """Unit-diagonal precision coupling each variable to its 4-neighbours.

    Raises
    ------
    DominanceError
        If ``|q| >= 1/4``.
    NotPositiveDefiniteError
        If the result fails the Cholesky check.
    """
    shape = GridShape.parse(shape)
    q = float(q)
    if abs(q) >= 0.25:
        raise DominanceError(f"|q|={abs(q)} breaks diagonal dominance for 4 neighbours (need < 0.25)")
    Q = np.eye(shape.total)
    pairs = _grid_neighbours(shape)
    Q[pairs[:, 0], pairs[:, 1]] = q
    Q[pairs[:, 1], pairs[:, 0]] = q
    cholesky(Q)
    return Q


def build_uniform(n, q):
    """Unit diagonal with every off-diagonal entry equal to ``q``."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    q = float(q)
    if n > 1 and abs(q) * (n - 1) >= 1.0:
        raise DominanceError(f"|q|*(n-1)={abs(q) * (n - 1)} >= 1 breaks diagonal dominance")
    Q = np.full((n, n), q)
    np.fill_diagonal(Q, 1.0)
    cholesky(Q)
    return Q


def random_permutation(n, seed):
    return make_rng(seed).permutation(n)


def build_random_sparse(shape, q, seed, permutation=None):
    """Nearest-neighbour precision with variables shuffled around the grid.

    Returns ``P Q_nn P^T`` for a uniformly random permutation ``P`` drawn
    from ``seed``; pass ``permutation`` to fix it explicitly.
    """
    shape = GridShape.parse(shape)
    Q_nn = build_nearest_neighbor(shape, q)
    perm = random_permutation(shape.total, seed) if permutation is None else np.asarray(permutation)
    if sorted(perm.tolist()) != list(range(shape.total)):
        raise ValueError("permutation must be a rearrangement of 0..n-1")
    # new variable perm[k] takes the role of old variable k
    inv = np.argsort(perm)
    return Q_nn[np.ix_(inv, inv)]


def build_precision(family, shape, q, seed=0):
    """Dispatch on a family name from :data:`FAMILIES`."""
    shape = GridShape.parse(shape)
    if family == "nearest_neighbor":
        return build_nearest_neighbor(shape, q)
    if family == "uniform":
        return build_uniform(shape.total, q)
    if family == "random_sparse":
        return build_random_sparse(shape, q, seed)
    raise ValueError(f"unknown GMRF family {family!r}; expected one of {FAMILIES}")


def check_diagonal_dominance(Q):
    """True iff every row has ``Q_ii > sum_{j != i} |Q_ij|``."""
    Q = np.asarray(Q, dtype=np.float64)
    diag = np.diag(Q)
    off = np.abs(Q).sum(axis=1) - np.abs(diag)
    return bool(np.all(diag > off))


def precision_to_covariance(Q):
    """Invert a precision matrix through its Cholesky factor."""
    L = cholesky(Q)
    S = cho_solve(L, np.eye(L.shape[0]))
    return 0.5 * (S + S.T)


def gaussian_entropy(cov):
    """Differential entropy ``0.5 * log det(2 pi e cov)`` in nats."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    n = cov.shape[0]
    return 0.5 * (n * LOG_2PI_E + log_det(cov))


def _check_cover(cov, p):
    if cov.shape[0] != p.shape.total:
        raise DimensionError(f"covariance has {cov.shape[0]} variables, partition covers {p.shape.total}")


def analytic_mi(cov, p):
    """Gaussian MI between the inner and outer variables of ``p``.

    ``0.5 * [log det cov_A + log det cov_B - log det cov]``
    """
    cov = np.asarray(cov, dtype=np.float64)
    _check_cover(cov, p)
    a, b = p.inner_index, p.outer_index
    return 0.5 * (log_det(cov[np.ix_(a, a)]) + log_det(cov[np.ix_(b, b)]) - log_det(cov))


@dataclass(frozen=True, eq=False)
class GmrfModel:
    """A multivariate Gaussian held as mean, covariance and optional precision.

    ``chol`` caches the lower Cholesky factor of ``precision`` and is filled
    in automatically when a precision is supplied.
    """

    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray = None
    chol: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.ndim != 2 or cov.shape != (mean.size, mean.size):
            raise DimensionError("mean and covariance sizes disagree")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        if self.precision is not None:
            Q = np.asarray(self.precision, dtype=np.float64)
            if Q.shape != cov.shape:
                raise DimensionError("precision and covariance sizes disagree")
            object.__setattr__(self, "precision", Q)
            if self.chol is None:
                object.__setattr__(self, "chol", cholesky(Q))

    @classmethod
    def from_precision(cls, Q, mean=None):
        Q = np.asarray(Q, dtype=np.float64)
        mean = np.zeros(Q.shape[0]) if mean is None else mean
        return cls(mean=mean, covariance=precision_to_covariance(Q), precision=Q)

    @classmethod
    def from_family(cls, family, shape, q, seed=0):
        return cls.from_precision(build_precision(family, shape, q, seed=seed))

    @property
    def n(self):
        return self.mean.size

    def marginal(self, index):
        index = np.asarray(index, dtype=np.intp)
        return self.mean[index], self.covariance[np.ix_(index, index)]


def sample(model, N, seed):
    """Draw ``N`` rows ``mean + solve(L^T, z)`` with ``L L^T = precision``."""
    if model.precision is None or model.chol is None:
        raise UnsupportedOperationError("sampling needs a precision matrix; this model was fitted from data")
    rng = make_rng(seed)
    z = rng.standard_normal((model.n, int(N)))
    x = solve_triangular(model.chol.T, z, lower=False, check_finite=False)
    return x.T + model.mean


def fit_gmrf(data, ridge=1e-4):
    """Gaussian fit: column means and unbiased covariance plus ``ridge * I``.

    Raises
    ------
    NotPositiveDefiniteError
        When the ridged covariance is still singular; raise ``ridge``.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimensionError("fitting needs a 2-D sample matrix with at least 2 rows")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (X.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    cov[np.diag_indices_from(cov)] += ridge
    cholesky(cov)
    return GmrfModel(mean=mean, covariance=cov)


class GaussianLogOdds:
    """Exact log density ratio ``log p(a, b) - log p_A(a) - log p_B(b)``.

    Calling the object evaluates row-aligned pairs. :meth:`cross` evaluates
    every combination of ``a`` rows with ``b`` rows, exploiting the fact that
    the only cross term is bilinear in ``a`` and ``b``.
    """

    def __init__(self, model, p):
        _check_cover(model.covariance, p)
        ia, ib = p.inner_index, p.outer_index
        S = model.covariance
        self.mu_a = model.mean[ia]
        self.mu_b = model.mean[ib]
        L = cholesky(S)
        L_a = cholesky(S[np.ix_(ia, ia)])
        L_b = cholesky(S[np.ix_(ib, ib)])
        P = cho_solve(L, np.eye(S.shape[0]))
        P = 0.5 * (P + P.T)
        inv_a = cho_solve(L_a, np.eye(ia.size))
        inv_b = cho_solve(L_b, np.eye(ib.size))
        # quadratic forms: joint precision blocks minus marginal precisions
        self._qa = P[np.ix_(ia, ia)] - inv_a
        self._qb = P[np.ix_(ib, ib)] - inv_b
        self._pab = P[np.ix_(ia, ib)]
        self.offset = 0.5 * (
            2 * np.sum(np.log(np.diag(L_a))) + 2 * np.sum(np.log(np.diag(L_b))) - 2 * np.sum(np.log(np.diag(L)))
        )

    def _parts(self, a, b):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64)) - self.mu_a
        b = np.atleast_2d(np.asarray(b, dtype=np.float64)) - self.mu_b
        fa = -0.5 * np.einsum("ij,jk,ik->i", a, self._qa, a)
        fb = -0.5 * np.einsum("ij,jk,ik->i", b, self._qb, b)
        return a, b, fa, fb

    def __call__(self, a, b):
        a, b, fa, fb = self._parts(a, b)
        if a.shape[0] != b.shape[0]:
            raise DimensionError("row counts of a and b differ")
        return self.offset + fa + fb - np.einsum("ij,jk,ik->i", a, self._pab, b)

    def cross(self, a, b):
        blocks = list(self.cross_blocks(a, b))
        return np.vstack(blocks) if blocks else np.zeros((0, np.atleast_2d(b).shape[0]))

    def cross_blocks(self, a, b, block_rows=32):
        """Yield ``cross(a[s:s+r], b)`` row blocks, sharing the ``b`` terms."""
        a, b, fa, fb = self._parts(a, b)
        bt = np.ascontiguousarray(b.T)
        ap = a @ self._pab
        fa = fa + self.offset
        for s in range(0, a.shape[0], block_rows):
            out = ap[s:s + block_rows] @ bt
            np.negative(out, out=out)
            out += fb[None, :]
            out += fa[s:s + block_rows, None]
            yield out


def analytic_logit(model, p):
    """Exact log-odds function a perfectly trained classifier would learn."""
    return GaussianLogOdds(model, p)


def _mvn_logpdf(x, mean, cov):
    from scipy.stats import multivariate_normal

    return multivariate_normal(mean=mean, cov=cov, allow_singular=False).logpdf(x)


def mc_mi_oracle(model, p, N, seed):
    """Monte Carlo Gaussian MI, independent of :func:`analytic_mi`.

    Draws ``N`` joint samples through scipy's multivariate normal and averages
    ``log p(a, b) - log p_A(a) - log p_B(b)`` with scipy's eigen-based log
    densities.

    Returns
    -------
    estimate : float
    stderr : float
        Standard error of the mean.
    """
    from scipy.stats import multivariate_normal

    _check_cover(model.covariance, p)
    rng = make_rng(seed)
    values = np.empty(int(N))
    chunk = 200_000
    ia, ib = p.inner_index, p.outer_index
    mu_a, cov_a = model.marginal(ia)
    mu_b, cov_b = model.marginal(ib)
    dist = multivariate_normal(mean=model.mean, cov=model.covariance)
    for start in range(0, int(N), chunk):
        m = min(chunk, int(N) - start)
        x = np.atleast_2d(dist.rvs(size=m, random_state=rng)).reshape(m, model.n)
        values[start:start + m] = (
            dist.logpdf(x) - _mvn_logpdf(x[:, ia], mu_a, cov_a) - _mvn_logpdf(x[:, ib], mu_b, cov_b)
        )
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def analytic_curve(cov, shape, Ls):
    """Analytic MI for each inner-square side length in ``Ls``."""
    shape = GridShape.parse(shape)
    return np.array([analytic_mi(cov, inner_square_partition(shape, L)) for L in Ls])


class GaussianMIEstimator(BaseEstimator):
    """Fit a Gaussian to data and report its analytic bipartition MI.

    Parameters
    ----------
    shape : tuple of (int, int) or str
        Grid the feature columns are laid out on (row-major).
    ridge : float, default=1e-4
        Added to the diagonal of the empirical covariance.

    Attributes
    ----------
    model_ : GmrfModel
    mean_ : ndarray of shape (n_features,)
    covariance_ : ndarray of shape (n_features, n_features)
    """

    def __init__(self, shape=(28, 28), ridge=1e-4):
        self.shape = shape
        self.ridge = ridge

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        grid = GridShape.parse(self.shape)
        if X.shape[1] != grid.total:
            raise DimensionError(f"X has {X.shape[1]} features, grid {grid} needs {grid.total}")
        self.model_ = fit_gmrf(X, ridge=self.ridge)
        self.mean_ = self.model_.mean
        self.covariance_ = self.model_.covariance
        self.n_features_in_ = X.shape[1]
        return self

    def mutual_information(self, L):
        check_is_fitted(self, "model_")
        return analytic_mi(self.covariance_, inner_square_partition(GridShape.parse(self.shape), L))

    def scaling_curve(self, Ls):
        check_is_fitted(self, "model_")
        return analytic_curve(self.covariance_, self.shape, Ls)
