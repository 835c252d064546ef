"""Binned featurisation, empirical-state Schmidt analysis and discrete MI.

A dataset of ``N`` rows is binned into one-hot local bases, so each row
maps to an orthonormal product basis state. Grouping the inner and outer
codes of each row gives a bipartite coefficient matrix ``C`` whose singular
values are the Schmidt coefficients of the encoded state.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import DimensionError, FeaturizationError
from .grid import GridShape
from .linalg import jacobi_eigvalsh

MODES = ("sample_sum", "sqrt_probability")
EIGENVALUE_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class BinnedDataset:
    """Integer bin codes in ``[0, n_bins)``, one row per sample."""

    codes: np.ndarray
    n_bins: int
    shape: GridShape = None

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 2:
            raise DimensionError("codes must be a 2-D array")
        if not np.issubdtype(codes.dtype, np.integer):
            raise TypeError("codes must be integers")
        if self.n_bins < 1 or (codes.size and (codes.min() < 0 or codes.max() >= self.n_bins)):
            raise FeaturizationError(f"codes must lie in [0, {self.n_bins})")
        if self.shape is not None and self.shape.total != codes.shape[1]:
            raise DimensionError("codes do not match the provenance grid")
        object.__setattr__(self, "codes", codes)

    @property
    def n_samples(self):
        return self.codes.shape[0]


def bin_featurize(data, n_bins, shape=None):
    """Uniform bins on ``[0, 1]``: ``code = min(floor(x * b), b - 1)``."""
    X = np.asarray(data, dtype=np.float64)
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if X.ndim != 2:
        raise DimensionError("data must be 2-D")
    if not np.all(np.isfinite(X)) or X.min(initial=0.0) < 0.0 or X.max(initial=0.0) > 1.0:
        raise FeaturizationError("bin_featurize needs values in [0, 1]; rescale first")
    codes = np.minimum(np.floor(X * n_bins), n_bins - 1).astype(np.int64)
    shape = GridShape.parse(shape) if shape is not None else None
    return BinnedDataset(codes, int(n_bins), shape)


def coarsen(d, n_bins):
    """Merge adjacent bins; ``n_bins`` must divide ``d.n_bins``."""
    if d.n_bins % n_bins:
        raise ValueError(f"{n_bins} does not divide {d.n_bins}")
    return BinnedDataset(d.codes // (d.n_bins // n_bins), n_bins, d.shape)


class UniformBinner(TransformerMixin, BaseEstimator):
    """Transformer wrapping :func:`bin_featurize` for use in pipelines."""

    def __init__(self, n_bins=2):
        self.n_bins = n_bins

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        return bin_featurize(check_array(X, dtype=np.float64), self.n_bins).codes


def _key_index(codes):
    """Distinct row keys and the index of each row into them."""
    if codes.shape[1] == 0:
        return np.zeros((1, 0), dtype=codes.dtype), np.zeros(codes.shape[0], dtype=np.intp)
    keys, inverse = np.unique(codes, axis=0, return_inverse=True)
    return keys, inverse.reshape(-1)


@dataclass(frozen=True, eq=False)
class EmpiricalState:
    """Sparse bipartite coefficient table of a normalised data state.

    Entry ``k`` carries amplitude ``amplitudes[k]`` on basis state
    ``|a_keys[rows[k]]>|b_keys[cols[k]]>``.
    """

    a_keys: np.ndarray
    b_keys: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    amplitudes: np.ndarray
    mode: str

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.float64)
        if np.any(amp <= 0):
            raise ValueError("amplitudes must be positive")
        if abs(np.sum(amp * amp) - 1.0) > 1e-12:
            raise ValueError("state is not normalised")

    @property
    def n_entries(self):
        return self.amplitudes.size

    def as_dict(self):
        return {
            (tuple(self.a_keys[r].tolist()), tuple(self.b_keys[c].tolist())): float(v)
            for r, c, v in zip(self.rows, self.cols, self.amplitudes)
        }

    def coefficient_matrix(self):
        C = np.zeros((len(self.a_keys), len(self.b_keys)))
        C[self.rows, self.cols] = self.amplitudes
        return C


def _joint_counts(d, p):
    codes = d.codes
    if codes.shape[1] != p.shape.total:
        raise DimensionError(f"dataset has {codes.shape[1]} features, partition covers {p.shape.total}")
    a_keys, ia = _key_index(codes[:, p.inner_index])
    b_keys, ib = _key_index(codes[:, p.outer_index])
    pair = ia.astype(np.int64) * len(b_keys) + ib
    uniq, counts = np.unique(pair, return_counts=True)
    rows, cols = np.divmod(uniq, len(b_keys))
    return a_keys, b_keys, rows, cols, counts, ia, ib


def build_empirical_state(d, p, mode="sqrt_probability"):
    """Encode a binned dataset as a normalised bipartite state.

    ``sample_sum`` superposes one basis state per sample, so amplitudes grow
    with the count ``n_ab``; ``sqrt_probability`` uses ``sqrt(n_ab / N)``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    a_keys, b_keys, rows, cols, counts, _, _ = _joint_counts(d, p)
    weights = counts.astype(np.float64) if mode == "sample_sum" else np.sqrt(counts.astype(np.float64))
    amp = weights / np.sqrt(np.sum(weights * weights))
    return EmpiricalState(a_keys, b_keys, rows, cols, amp, mode)


@dataclass(frozen=True, eq=False)
class SchmidtSpectrum:
    """Schmidt coefficients in descending order, squares summing to one."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size and (np.any(v <= 0) or np.any(v > 1 + 1e-12)):
            raise ValueError("Schmidt coefficients must lie in (0, 1]")
        if abs(np.sum(v * v) - 1.0) > 1e-10:
            raise ValueError("squared Schmidt coefficients must sum to 1")
        object.__setattr__(self, "values", v)

    @property
    def rank(self):
        return self.values.size


def schmidt_values(C, tol=1e-12):
    """Singular values of ``C`` via a Jacobi eigensolve of its smaller Gram.

    Eigenvalues below ``1e-14 * trace`` are treated as zero and dropped.
    Returned in descending order.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise DimensionError("coefficient matrix must be 2-D")
    # ties go to the row (inner) side
    G = C @ C.T if C.shape[0] <= C.shape[1] else C.T @ C
    trace = float(np.trace(G))
    if trace == 0.0:
        return np.zeros(0)
    w = jacobi_eigvalsh(G, tol=tol)
    w = w[w >= EIGENVALUE_FLOOR * trace]
    return np.sqrt(w)[::-1]


def schmidt_spectrum(state):
    """Schmidt decomposition of an :class:`EmpiricalState`."""
    s = schmidt_values(state.coefficient_matrix())
    # renormalise away the round-off of the eigensolve
    s = s / math.sqrt(float(np.sum(s * s)))
    return SchmidtSpectrum(np.minimum(s, 1.0))


def entanglement_entropy(spectrum):
    """``-sum lambda^2 ln lambda^2`` in nats, with ``0 ln 0 = 0``."""
    v = spectrum.values if isinstance(spectrum, SchmidtSpectrum) else np.asarray(spectrum, dtype=np.float64)
    p = v * v
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def discrete_mi(d, p):
    """Plug-in MI ``sum (n_ab/N) ln[N n_ab / (n_a n_b)]`` of the binned keys."""
    _, _, rows, cols, counts, ia, ib = _joint_counts(d, p)
    N = d.n_samples
    n_a = np.bincount(ia)
    n_b = np.bincount(ib)
    c = counts.astype(np.float64)
    return float(np.sum(c / N * np.log(N * c / (n_a[rows] * n_b[cols].astype(np.float64)))))


def joint_table(d, p):
    """Dense empirical joint table ``P[a, b]`` over distinct keys."""
    a_keys, b_keys, rows, cols, counts, _, _ = _joint_counts(d, p)
    P = np.zeros((len(a_keys), len(b_keys)))
    P[rows, cols] = counts / d.n_samples
    return P


def discrete_kl(P, Q):
    """``sum P ln(P/Q)`` in nats; ``inf`` where ``P > 0`` but ``Q = 0``."""
    P = np.asarray(P, dtype=np.float64).ravel()
    Q = np.asarray(Q, dtype=np.float64).ravel()
    if P.shape != Q.shape:
        raise DimensionError("P and Q must have the same shape")
    if np.any(P < 0) or np.any(Q < 0):
        raise ValueError("probabilities must be nonnegative")
    if abs(P.sum() - 1.0) > 1e-9 or abs(Q.sum() - 1.0) > 1e-9:
        raise ValueError("P and Q must each sum to 1")
    support = P > 0
    if np.any(Q[support] == 0):
        return math.inf
    return float(np.sum(P[support] * np.log(P[support] / Q[support])))


def network_entanglement_bound(n_links, bond_dim):
    """Maximum entanglement across ``n_links`` cut bonds of dimension ``bond_dim``."""
    if n_links < 0 or bond_dim < 1:
        raise ValueError("need n_links >= 0 and bond_dim >= 1")
    return n_links * math.log(bond_dim)


def boundary_law_bound(L, d, bond_dim):
    """``2 d L^(d-1) ln m`` for a hypercubic patch of side ``L`` in ``d`` dimensions."""
    if L < 1 or d < 1:
        raise ValueError("need L >= 1 and d >= 1")
    return network_entanglement_bound(2 * d * L ** (d - 1), bond_dim)
