"""Trial-averaged MI estimates and scaling curves over inner-square sizes."""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .._rng import derive_seed, make_rng
from ..exceptions import (
    DimensionError,
    EstimationFailedError,
    FormatError,
    MiScaleError,
    TrainingDivergedError,
)
from ..gmrf import analytic_mi, fit_gmrf
from ..grid import GridShape, inner_square_partition
from .readout import (
    ClassifierLogOdds,
    TrainConfig,
    direct_kl_estimate,
    dv_estimate,
    make_marginal_samples,
    train_classifier,
)

READOUTS = ("direct", "dv", "analytic", "gaussian_fit", "discrete")
CURVE_HEADER = ("L", "mi_mean_nats", "mi_std_nats", "n_trials", "readout", "flags")


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1))


@dataclass
class MiEstimate:
    """Per-trial ``(direct, dv)`` readouts and their aggregates.

    A trial whose Donsker-Varadhan sum overflowed stores NaN in the dv slot;
    the aggregate dv value is then withheld (NaN) and ``dv_overflow`` is set.
    """

    per_trial: list = field(default_factory=list)
    validation_losses: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    deterministic: bool = False

    @property
    def n_trials(self):
        return len(self.per_trial)

    @property
    def direct_values(self):
        return [d for d, _ in self.per_trial]

    @property
    def dv_values(self):
        return [v for _, v in self.per_trial]

    @property
    def direct_nats(self):
        return _mean_std(self.direct_values)[0]

    @property
    def direct_std(self):
        return _mean_std(self.direct_values)[1]

    @property
    def dv_overflow(self):
        return any(not math.isfinite(v) for v in self.dv_values)

    @property
    def dv_nats(self):
        return float("nan") if self.dv_overflow else _mean_std(self.dv_values)[0]

    @property
    def dv_std(self):
        return float("nan") if self.dv_overflow else _mean_std(self.dv_values)[1]

    @property
    def flags(self):
        out = []
        if self.dv_overflow and self.per_trial and not self.deterministic:
            out.append("dv_overflow")
        if any(not math.isfinite(d) for d in self.direct_values):
            out.append("direct_invalid")
        if self.failures:
            out.append(f"failed_trials={len(self.failures)}")
        if not self.per_trial:
            out.append("failed")
        return out

    def value(self, readout):
        if readout == "dv":
            return self.dv_nats, self.dv_std
        return self.direct_nats, self.direct_std

    @classmethod
    def exact(cls, value):
        """A deterministic single value (analytic or fitted-Gaussian MI)."""
        return cls(per_trial=[(float(value), float("nan"))], deterministic=True)


def estimate_mi(joint, p, cfg, trials=1):
    """Average the classifier estimate over ``trials`` independent cycles.

    Each cycle draws its own held-out split of the joint rows, synthesises
    product-of-marginals rows for both splits, trains a fresh network and
    evaluates both readouts on the held-out joint rows. Cycle ``k`` is seeded
    from ``(cfg.seed, k)`` so results do not depend on execution order.

    Raises
    ------
    EstimationFailedError
        When every trial diverged.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    X = np.asarray(joint, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != p.shape.total:
        raise DimensionError(f"joint must be (N, {p.shape.total})")
    N = X.shape[0]
    n_val = max(2, int(round(cfg.validation_fraction * N)))
    if N - n_val < 1:
        raise DimensionError("not enough rows for a training split")
    est = MiEstimate()
    for k in range(int(trials)):
        seed_k = derive_seed(cfg.seed, k)
        order = make_rng(seed_k, 0).permutation(N)
        val = X[np.sort(order[:n_val])]
        train = X[np.sort(order[n_val:])]
        marg_train = make_marginal_samples(train, p, make_rng(seed_k, 1))
        marg_val = make_marginal_samples(val, p, make_rng(seed_k, 2))
        try:
            clf = train_classifier(train, marg_train, p, cfg, validation=(val, marg_val), seed=seed_k)
        except TrainingDivergedError as exc:
            est.failures.append(str(exc))
            continue
        T = ClassifierLogOdds(clf, p)
        direct = direct_kl_estimate(T, val, p)
        dv = dv_estimate(T, val, p, pair_budget=cfg.dv_pair_budget, seed=derive_seed(seed_k, 3))
        est.per_trial.append((direct, dv))
        est.validation_losses.append(clf.best_validation_loss_)
    if not est.per_trial:
        raise EstimationFailedError(f"all {trials} trials diverged: {est.failures[0]}")
    return est


@dataclass
class ScalingCurve:
    """One :class:`MiEstimate` per inner-square side length, sharing a readout."""

    entries: list
    readout: str
    dataset: str = ""
    trials: int = 1
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}")
        Ls = [L for L, _ in self.entries]
        if any(b <= a for a, b in zip(Ls, Ls[1:])):
            raise ValueError("L values must be strictly increasing")

    @property
    def Ls(self):
        return np.array([L for L, _ in self.entries])

    @property
    def means(self):
        return np.array([e.value(self.readout)[0] for _, e in self.entries])

    @property
    def stds(self):
        return np.array([e.value(self.readout)[1] for _, e in self.entries])

    def rows(self):
        for L, e in self.entries:
            mean, std = e.value(self.readout)
            yield (int(L), mean, std, e.n_trials, self.readout, ";".join(e.flags))

    def to_csv(self, path):
        write_curve_csv(path, list(self.rows()))


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_curve_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class CurveTable:
    """Columns of a curve CSV as read back from disk."""

    L: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_trials: np.ndarray
    readout: list
    flags: list


def read_curve_csv(path):
    """Parse a curve CSV written by :meth:`ScalingCurve.to_csv`.

    Raises
    ------
    FormatError
        On a wrong header, ragged row or unparsable number.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CURVE_HEADER:
        raise FormatError(f"{path}: expected header {','.join(CURVE_HEADER)}")
    cols = {k: [] for k in CURVE_HEADER}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CURVE_HEADER):
            raise FormatError(f"{path}:{lineno}: expected {len(CURVE_HEADER)} fields, got {len(row)}")
        try:
            cols["L"].append(int(row[0]))
            cols["mi_mean_nats"].append(float(row[1]))
            cols["mi_std_nats"].append(float(row[2]))
            cols["n_trials"].append(int(row[3]))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        cols["readout"].append(row[4])
        cols["flags"].append(row[5])
    return CurveTable(
        L=np.array(cols["L"], dtype=int),
        mean=np.array(cols["mi_mean_nats"]),
        std=np.array(cols["mi_std_nats"]),
        n_trials=np.array(cols["n_trials"], dtype=int),
        readout=cols["readout"],
        flags=cols["flags"],
    )


def scaling_curve(joint, shape, Ls, cfg=None, trials=1, readout="direct", model=None,
                  ridge=1e-4, threads=1, dataset=""):
    """MI versus inner-square side length ``L``.

    Parameters
    ----------
    joint : ndarray of shape (N, h*w) or None
        Samples; unused for the ``analytic`` readout.
    shape : GridShape or (h, w)
    Ls : iterable of int
    cfg : TrainConfig, optional
        Training settings for the ``direct`` and ``dv`` readouts. Each ``L``
        trains with its own seed derived from ``(cfg.seed, L)``.
    trials : int
    readout : {'direct', 'dv', 'analytic', 'gaussian_fit'}
        ``analytic`` evaluates the closed form on ``model``; ``gaussian_fit``
        fits a Gaussian to ``joint`` (with ``ridge``) and does the same.
    threads : int
        Number of side lengths estimated concurrently.

    A failing ``L`` yields an entry flagged ``failed`` instead of aborting.
    """
    shape = GridShape.parse(shape)
    Ls = [int(L) for L in Ls]
    parts = {L: inner_square_partition(shape, L) for L in Ls}
    if readout not in ("direct", "dv", "analytic", "gaussian_fit"):
        raise ValueError(f"unsupported readout {readout!r}")

    if readout in ("analytic", "gaussian_fit"):
        if readout == "analytic":
            if model is None:
                raise ValueError("the analytic readout needs a GmrfModel")
            cov = model.covariance
        else:
            cov = fit_gmrf(joint, ridge=ridge).covariance
        entries, timings = [], {}
        for L in Ls:
            t0 = time.perf_counter()
            try:
                entries.append((L, MiEstimate.exact(analytic_mi(cov, parts[L]))))
            except MiScaleError as exc:
                entries.append((L, MiEstimate(failures=[str(exc)])))
            timings[L] = time.perf_counter() - t0
        return ScalingCurve(entries, readout, dataset=dataset, trials=1, timings=timings)

    cfg = cfg or TrainConfig()

    def job(L):
        t0 = time.perf_counter()
        try:
            est = estimate_mi(joint, parts[L], cfg.replace(seed=derive_seed(cfg.seed, L)), trials)
        except (MiScaleError, np.linalg.LinAlgError) as exc:
            est = MiEstimate(failures=[str(exc)])
        return L, est, time.perf_counter() - t0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, Ls))
    else:
        results = [job(L) for L in Ls]
    results.sort(key=lambda r: r[0])
    return ScalingCurve(
        [(L, est) for L, est, _ in results],
        readout,
        dataset=dataset,
        trials=trials,
        timings={L: dt for L, _, dt in results},
    )


class LogisticMIEstimator(BaseEstimator):
    """Classifier-based MI between a centred ``L x L`` patch and the rest.

    Parameters
    ----------
    shape : (int, int) or str, default=(28, 28)
    L : int, default=1
    trials : int, default=1
    hidden_sizes, activation, learning_rate, batch_size, max_epochs, patience,
    validation_fraction, standardize, resample_marginals, dv_pair_budget
        Forwarded to :class:`TrainConfig`.
    random_state : int, default=0

    Attributes
    ----------
    estimate_ : MiEstimate
    mi_ : float
        Mean direct readout in nats.
    mi_std_ : float
    dv_mi_ : float
        Mean Donsker-Varadhan readout, NaN on overflow.
    """

    def __init__(self, shape=(28, 28), L=1, trials=1, hidden_sizes=(512, 512), activation="relu",
                 learning_rate=1e-4, batch_size=256, max_epochs=50, patience=5,
                 validation_fraction=0.1, standardize=True, resample_marginals=False,
                 dv_pair_budget=1_000_000, random_state=0):
        self.shape = shape
        self.L = L
        self.trials = trials
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.standardize = standardize
        self.resample_marginals = resample_marginals
        self.dv_pair_budget = dv_pair_budget
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            hidden_sizes=self.hidden_sizes, activation=self.activation,
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            validation_fraction=self.validation_fraction, seed=self.random_state,
            standardize=self.standardize, resample_marginals=self.resample_marginals,
            dv_pair_budget=self.dv_pair_budget,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        grid = GridShape.parse(self.shape)
        if X.shape[1] != grid.total:
            raise DimensionError(f"X has {X.shape[1]} features, grid {grid} needs {grid.total}")
        self.partition_ = inner_square_partition(grid, self.L)
        self.estimate_ = estimate_mi(X, self.partition_, self._train_config(), self.trials)
        self.mi_ = self.estimate_.direct_nats
        self.mi_std_ = self.estimate_.direct_std
        self.dv_mi_ = self.estimate_.dv_nats
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, y=None):
        check_is_fitted(self, "estimate_")
        return self.mi_
