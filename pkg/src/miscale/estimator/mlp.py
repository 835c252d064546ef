"""Dense feed-forward log-odds classifier trained with binary cross-entropy.

Pure numpy forward/backward passes and an Adam optimiser. The network
outputs one unbounded score ``T(x)`` per row, read as the log-odds that the
row came from the positive ("joint") class.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._rng import make_rng
from ..exceptions import DimensionError, TrainingDivergedError

LN2 = float(np.log(2.0))

_ACTIVATIONS = ("relu", "tanh")


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z, h, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - h * h


def bce_with_logits(t, y):
    """Mean binary cross-entropy of logits ``t`` against 0/1 labels ``y``."""
    t = np.asarray(t, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, t) - y * t))


class Adam:
    """Adaptive-moment updates over a list of parameter arrays (in place)."""

    def __init__(self, params, learning_rate=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = float(self.learning_rate * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t))
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(p.dtype, copy=False)


class MLPLogOddsClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier whose decision function is a learned log-odds.

    Hidden layers use ``activation``; the output layer is linear and starts at
    zero, so the untrained network predicts ``T = 0`` (probability 1/2) and
    its cross-entropy starts at exactly ``ln 2``. Training runs minibatch
    Adam on the training split, scores the held-out split after every epoch,
    and keeps the parameters with the lowest held-out loss.

    Parameters
    ----------
    hidden_sizes : tuple of int, default=(512, 512)
    activation : {'relu', 'tanh'}, default='relu'
    learning_rate : float, default=1e-4
    batch_size : int, default=256
    max_epochs : int, default=50
    patience : int, default=5
        Epochs without held-out improvement before stopping.
    validation_fraction : float, default=0.1
        Held-out share used when ``fit`` is not given explicit validation data.
    standardize : bool, default=True
        Z-score inputs with training-split statistics before the first layer.
    dtype : str, default='float32'
        Floating type used for parameters and activations.
    random_state : int, default=0

    Attributes
    ----------
    weights_ : list of ndarray
    biases_ : list of ndarray
    best_validation_loss_ : float
    history_ : list of (epoch, train_loss, validation_loss)
    """

    def __init__(
        self,
        hidden_sizes=(512, 512),
        activation="relu",
        learning_rate=1e-4,
        batch_size=256,
        max_epochs=50,
        patience=5,
        validation_fraction=0.1,
        standardize=True,
        dtype="float32",
        random_state=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.standardize = standardize
        self.dtype = dtype
        self.random_state = random_state

    # -- parameters -----------------------------------------------------

    def _init_params(self, n_features, rng):
        dt = np.dtype(self.dtype)
        sizes = [n_features, *[int(h) for h in self.hidden_sizes], 1]
        self.weights_, self.biases_ = [], []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if k == len(sizes) - 2:
                W = np.zeros((fan_in, fan_out), dtype=dt)
            else:
                gain = 2.0 if self.activation == "relu" else 1.0
                W = (rng.standard_normal((fan_in, fan_out)) * np.sqrt(gain / fan_in)).astype(dt)
            self.weights_.append(W)
            self.biases_.append(np.zeros(fan_out, dtype=dt))

    def _check_hyperparameters(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if any(int(h) < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive; patience nonnegative")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")

    def _transform_input(self, X):
        X = np.asarray(X, dtype=self.dtype)
        if self.standardize:
            X = (X - self.input_mean_) / self.input_scale_
        return X

    # -- forward / backward ---------------------------------------------

    def _forward(self, X, keep=False):
        h = X
        cache = []
        n_layers = len(self.weights_)
        for k, (W, b) in enumerate(zip(self.weights_, self.biases_)):
            z = h @ W + b
            if k < n_layers - 1:
                h_next = _activate(z, self.activation)
            else:
                h_next = z
            if keep:
                cache.append((h, z, h_next))
            h = h_next
        return h[:, 0], cache

    def _backward(self, cache, dt):
        """Gradients of the mean loss given ``dL/dT`` per row (already averaged)."""
        grads_W = [None] * len(self.weights_)
        grads_b = [None] * len(self.biases_)
        delta = dt[:, None].astype(self.dtype)
        for k in range(len(self.weights_) - 1, -1, -1):
            h_in, z, h_out = cache[k]
            if k < len(self.weights_) - 1:
                delta = delta * _activation_grad(z, h_out, self.activation)
            grads_W[k] = h_in.T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = delta @ self.weights_[k].T
        return grads_W, grads_b

    def _loss(self, X, y, chunk=65536):
        total = 0.0
        for s in range(0, X.shape[0], chunk):
            t, _ = self._forward(X[s:s + chunk])
            total += bce_with_logits(t, y[s:s + chunk]) * min(chunk, X.shape[0] - s)
        return total / X.shape[0]

    def _snapshot(self):
        return [W.copy() for W in self.weights_], [b.copy() for b in self.biases_]

    # -- public API -----------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None, epoch_data=None):
        """Train on ``(X, y)`` with labels 1 = joint, 0 = product of marginals.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
        y : array-like of shape (n_samples,)
        X_val, y_val : array-like, optional
            Held-out split for early stopping. When omitted a stratified
            ``validation_fraction`` of ``(X, y)`` is held out.
        epoch_data : callable, optional
            ``epoch_data(epoch) -> (X, y)`` replacing the training split at
            the start of every epoch after the first.

        Raises
        ------
        TrainingDivergedError
            If a minibatch or held-out loss is not finite.
        """
        self._check_hyperparameters()
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.array([0, 1])
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be 0 (marginal) or 1 (joint)")
        rng = make_rng(self.random_state)
        if X_val is None:
            X, y, X_val, y_val = self._holdout(X, y, rng)
        else:
            X_val, y_val = check_X_y(X_val, y_val, dtype=np.float64)
        if X_val.shape[1] != X.shape[1]:
            raise DimensionError("validation data has a different feature count")

        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.input_mean_ = X.mean(axis=0).astype(self.dtype)
            std = X.std(axis=0)
            self.input_scale_ = np.where(std > 0, std, 1.0).astype(self.dtype)
        self._init_params(X.shape[1], rng)

        Xt = self._transform_input(X)
        yt = y.astype(self.dtype)
        Xv = self._transform_input(X_val)
        yv = np.asarray(y_val, dtype=np.float64)

        params = [*self.weights_, *self.biases_]
        opt = Adam(params, learning_rate=self.learning_rate)

        best = self._loss(Xv, yv)
        best_params = self._snapshot()
        self.history_ = [(0, float("nan"), best)]
        stale = 0
        for epoch in range(1, int(self.max_epochs) + 1):
            if epoch_data is not None and epoch > 1:
                Xe, ye = epoch_data(epoch)
                Xt = self._transform_input(Xe)
                yt = np.asarray(ye, dtype=self.dtype)
            order = rng.permutation(Xt.shape[0])
            running = 0.0
            for s in range(0, order.size, int(self.batch_size)):
                idx = order[s:s + int(self.batch_size)]
                xb, yb = Xt[idx], yt[idx]
                t, cache = self._forward(xb, keep=True)
                loss = bce_with_logits(t, yb)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
                running += loss * idx.size
                sig = 0.5 * (1.0 + np.tanh(0.5 * t))
                gW, gb = self._backward(cache, (sig - yb) / idx.size)
                opt.step([*gW, *gb])
            val = self._loss(Xv, yv)
            if not np.isfinite(val):
                raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
            self.history_.append((epoch, running / order.size, val))
            if val < best:
                best = val
                best_params = self._snapshot()
                stale = 0
            else:
                stale += 1
                if stale > self.patience:
                    break
        self.weights_, self.biases_ = best_params
        self.best_validation_loss_ = best
        self.n_epochs_ = epoch
        return self

    def _holdout(self, X, y, rng):
        val_idx, train_idx = [], []
        for label in (0, 1):
            idx = rng.permutation(np.flatnonzero(y == label))
            n_val = max(1, int(round(self.validation_fraction * idx.size)))
            val_idx.append(idx[:n_val])
            train_idx.append(idx[n_val:])
        tr = np.sort(np.concatenate(train_idx))
        va = np.sort(np.concatenate(val_idx))
        return X[tr], y[tr], X[va], y[va]

    def decision_function(self, X, chunk=65536):
        """Log-odds ``T(x)`` for each row."""
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"X has {X.shape[1]} features, classifier expects {self.n_features_in_}")
        Xt = self._transform_input(X)
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], chunk):
            out[s:s + chunk], _ = self._forward(Xt[s:s + chunk])
        return out

    def predict_proba(self, X):
        t = self.decision_function(X)
        p1 = 0.5 * (1.0 + np.tanh(0.5 * t))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def loss(self, X, y):
        """Binary cross-entropy on ``(X, y)``."""
        return bce_with_logits(self.decision_function(X), np.asarray(y, dtype=np.float64))

    def cross_decision(self, Xa, Xb, rows, cols, chunk=65536):
        """Log-odds of the rows ``[Xa[rows[k]], Xb[cols[k]]]``.

        ``Xa`` holds the first ``Xa.shape[1]`` input columns and ``Xb`` the
        rest. The first layer is split by column block so each side is
        projected once rather than once per pair.
        """
        check_is_fitted(self, "weights_")
        Xa = np.asarray(Xa, dtype=np.float64)
        Xb = np.asarray(Xb, dtype=np.float64)
        da = Xa.shape[1]
        if da + Xb.shape[1] != self.n_features_in_:
            raise DimensionError("column blocks do not add up to the classifier's input size")
        W0, b0 = self.weights_[0], self.biases_[0]
        if self.standardize:
            # centering folds into the b-side projection
            ha = (np.asarray(Xa, dtype=self.dtype) / self.input_scale_[:da]) @ W0[:da]
            hb = (np.asarray(Xb, dtype=self.dtype) / self.input_scale_[da:]) @ W0[da:]
            shift = (self.input_mean_ / self.input_scale_) @ W0
            hb = hb + (b0 - shift)
        else:
            ha = np.asarray(Xa, dtype=self.dtype) @ W0[:da]
            hb = np.asarray(Xb, dtype=self.dtype) @ W0[da:] + b0
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        out = np.empty(rows.size)
        n_layers = len(self.weights_)
        for s in range(0, rows.size, chunk):
            z = ha[rows[s:s + chunk]] + hb[cols[s:s + chunk]]
            h = _activate(z, self.activation) if n_layers > 1 else z
            for k in range(1, n_layers):
                z = h @ self.weights_[k] + self.biases_[k]
                h = _activate(z, self.activation) if k < n_layers - 1 else z
            out[s:s + chunk] = h[:, 0]
        return out
