"""Marginal synthesis, classifier training, and the two MI readouts."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .._rng import make_rng
from ..exceptions import DimensionError
from ..grid import split_sample
from .mlp import MLPLogOddsClassifier


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the log-odds network and its training loop.

    ``dv_pair_budget`` caps the number of cross pairs evaluated by the
    Donsker-Varadhan readout; ``resample_marginals`` draws a fresh product-of-
    marginals set every epoch instead of once per trial.
    """

    hidden_sizes: tuple = (512, 512)
    activation: str = "relu"
    learning_rate: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 0
    standardize: bool = True
    resample_marginals: bool = False
    dv_pair_budget: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.activation not in ("relu", "tanh"):
            raise ValueError("activation must be 'relu' or 'tanh'")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive")
        if self.patience < 0:
            raise ValueError("patience must be nonnegative")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.dv_pair_budget < 1:
            raise ValueError("dv_pair_budget must be positive")

    def replace(self, **changes):
        return TrainConfig(**{**asdict(self), **changes})

    def to_dict(self):
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    def classifier(self, seed=None):
        return MLPLogOddsClassifier(
            hidden_sizes=self.hidden_sizes,
            activation=self.activation,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            validation_fraction=self.validation_fraction,
            standardize=self.standardize,
            random_state=self.seed if seed is None else seed,
        )


def make_marginal_samples(joint, p, seed):
    """Product-of-marginals rows: inner values from one random joint row,
    outer values from another, both drawn uniformly with replacement."""
    X = np.asarray(joint)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("joint samples must be a nonempty 2-D array")
    if X.shape[1] != p.shape.total:
        raise DimensionError(f"joint has {X.shape[1]} features, partition expects {p.shape.total}")
    rng = make_rng(seed)
    n = X.shape[0]
    i = rng.integers(0, n, size=n)
    j = rng.integers(0, n, size=n)
    out = np.empty_like(X)
    out[:, p.inner_index] = X[i][:, p.inner_index]
    out[:, p.outer_index] = X[j][:, p.outer_index]
    return out


def _ordered(X, p):
    """Columns reordered inner-first, the classifier's input layout."""
    return np.asarray(X)[:, p.order]


def train_classifier(joint, marginal, p, cfg, validation=None, seed=None):
    """Fit a log-odds network separating joint rows (label 1) from marginal rows.

    Parameters
    ----------
    joint, marginal : ndarray of shape (N, n_features)
        Equal row counts, so the class prior term of the log-odds vanishes.
    p : Bipartition
    cfg : TrainConfig
    validation : tuple of (joint_val, marginal_val), optional
        Held-out rows for early stopping. Defaults to a
        ``cfg.validation_fraction`` split of the inputs.
    seed : int, optional
        Overrides ``cfg.seed`` for weight init, batching and resampling.

    Returns
    -------
    MLPLogOddsClassifier
        With parameters restored to the best held-out loss.
    """
    joint = np.asarray(joint, dtype=np.float64)
    marginal = np.asarray(marginal, dtype=np.float64)
    if joint.shape != marginal.shape:
        raise DimensionError("joint and marginal sample matrices must have equal shape")
    seed = cfg.seed if seed is None else seed
    X = np.vstack([_ordered(joint, p), _ordered(marginal, p)])
    y = np.concatenate([np.ones(joint.shape[0], dtype=int), np.zeros(marginal.shape[0], dtype=int)])
    X_val = y_val = None
    if validation is not None:
        jv, mv = (np.asarray(v, dtype=np.float64) for v in validation)
        X_val = np.vstack([_ordered(jv, p), _ordered(mv, p)])
        y_val = np.concatenate([np.ones(jv.shape[0], dtype=int), np.zeros(mv.shape[0], dtype=int)])

    epoch_data = None
    if cfg.resample_marginals:
        def epoch_data(epoch):
            fresh = make_marginal_samples(joint, p, make_rng(seed, 1, epoch))
            return np.vstack([X[: joint.shape[0]], _ordered(fresh, p)]), y

    clf = cfg.classifier(seed=seed)
    clf.fit(X, y, X_val=X_val, y_val=y_val, epoch_data=epoch_data)
    return clf


class ClassifierLogOdds:
    """Adapter presenting a trained classifier as a log-odds function ``T(a, b)``."""

    def __init__(self, clf, p):
        self.clf = clf
        self.p = p

    def __call__(self, a, b):
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        if a.shape[1] != len(self.p.inner) or b.shape[1] != len(self.p.outer):
            raise DimensionError("a/b widths do not match the partition")
        return self.clf.decision_function(np.hstack([a, b]))

    def pairs(self, a, b, rows, cols):
        return self.clf.cross_decision(a, b, rows, cols)


def log_odds(clf, a, b, p=None):
    """Forward pass ``T(a, b)`` of a trained classifier.

    ``a`` and ``b`` are inner and outer feature vectors (or row stacks).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    single = a.ndim == 1
    a2, b2 = np.atleast_2d(a), np.atleast_2d(b)
    if a2.shape[1] + b2.shape[1] != clf.n_features_in_:
        raise DimensionError(
            f"inputs have {a2.shape[1]} + {b2.shape[1]} features, classifier expects {clf.n_features_in_}"
        )
    if p is not None and a2.shape[1] != len(p.inner):
        raise DimensionError("a does not match the partition's inner size")
    t = clf.decision_function(np.hstack([a2, b2]))
    return float(t[0]) if single else t


def direct_kl_estimate(T, joint_validation, p):
    """Mean of ``T`` over held-out joint rows; NaN if any value is non-finite."""
    X = np.asarray(joint_validation, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError("need at least one validation row")
    a, b = split_sample(X, p)
    t = np.asarray(T(a, b), dtype=np.float64)
    if not np.all(np.isfinite(t)):
        return float("nan")
    return float(np.mean(t))


def _pair_values(T, a, b, rows, cols):
    if hasattr(T, "pairs"):
        return np.asarray(T.pairs(a, b, rows, cols), dtype=np.float64)
    return np.asarray(T(a[rows], b[cols]), dtype=np.float64)


def _logmeanexp_stream(blocks):
    """Shifted log-mean-exp over an iterable of value blocks."""
    shift = -np.inf
    acc = 0.0
    count = 0
    for v in blocks:
        if v.size == 0:
            continue
        if not np.all(np.isfinite(v)):
            return float("nan")
        m = float(v.max())
        if m > shift:
            acc = acc * np.exp(shift - m) if np.isfinite(shift) else 0.0
            shift = m
        # blocks are scratch arrays owned by this loop
        v -= shift
        np.exp(v, out=v)
        acc += float(v.sum())
        count += v.size
    if count == 0 or not np.isfinite(acc) or acc <= 0:
        return float("nan")
    return shift + float(np.log(acc / count))


def dv_estimate(T, joint_validation, p, pair_budget=100_000_000, seed=0, block_rows=32):
    """Donsker-Varadhan readout
    ``mean_i T(a_i, b_i) - log mean_{i,j} exp T(a_i, b_j)``.

    All ``M**2`` cross pairs are used when ``M**2 <= pair_budget``; otherwise
    ``pair_budget`` pairs are drawn uniformly without replacement. Returns NaN
    (the overflow flag) when the exponential sum is not finite.
    """
    X = np.asarray(joint_validation, dtype=np.float64)
    M = X.shape[0]
    if M < 2:
        raise DimensionError("Donsker-Varadhan readout needs at least 2 validation rows")
    first = direct_kl_estimate(T, X, p)
    if not np.isfinite(first):
        return float("nan")
    a, b = split_sample(X, p)
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    total = M * M
    if total <= pair_budget:
        if hasattr(T, "cross_blocks"):
            blocks = T.cross_blocks(a, b, block_rows)
        elif hasattr(T, "cross"):
            blocks = (np.asarray(T.cross(a[s:s + block_rows], b), dtype=np.float64)
                      for s in range(0, M, block_rows))
        else:
            cols_all = np.arange(M)

            def blocks_gen():
                for s in range(0, M, block_rows):
                    r = np.arange(s, min(s + block_rows, M))
                    yield _pair_values(T, a, b, np.repeat(r, M), np.tile(cols_all, r.size))

            blocks = blocks_gen()
    else:
        rng = make_rng(seed)
        flat = rng.choice(total, size=int(pair_budget), replace=False)
        rows, cols = np.divmod(flat, M)
        chunk = 1 << 18
        blocks = (_pair_values(T, a, b, rows[s:s + chunk], cols[s:s + chunk])
                  for s in range(0, rows.size, chunk))
    second = _logmeanexp_stream(blocks)
    if not np.isfinite(second):
        return float("nan")
    return first - second
