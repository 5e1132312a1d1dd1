"""scikit-learn style front end: fit a ridge-regularized linear model with SPAG.

The training set is split over ``n_workers`` simulated machines and the
server preconditions with a subsample of ``n_precond`` examples. Only the
final coefficients and a per-iteration history are kept.
"""

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import algorithms as alg
from .data import SparseDataset
from .errors import ArgumentError
from .harness import Cluster, local_init
from .losses import RegularizedLoss


class _SPAGBase(BaseEstimator):
    _loss_kind = None

    def __init__(self, lam=1e-4, n_workers=4, n_precond=None, mu="auto", G_min=1.0, t0=50,
                 inner_tol=1e-9, max_iter=200, tol=1e-8, random_state=0):
        self.lam = lam
        self.n_workers = n_workers
        self.n_precond = n_precond
        self.mu = mu
        self.G_min = G_min
        self.t0 = t0
        self.inner_tol = inner_tol
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _check_params(self, N):
        if not self.lam > 0:
            raise ArgumentError(f"lam must be positive, got {self.lam}")
        if not 1 <= self.n_workers <= N:
            raise ArgumentError(f"n_workers must lie in [1, {N}], got {self.n_workers}")
        n = N // self.n_workers if self.n_precond is None else self.n_precond
        if not 1 <= n <= N:
            raise ArgumentError(f"n_precond must lie in [1, {N}], got {n}")
        if self.mu == "auto":
            mu = 0.1 / n
        elif isinstance(self.mu, str) or not self.mu >= 0:
            raise ArgumentError(f"mu must be 'auto' or a non-negative number, got {self.mu!r}")
        else:
            mu = float(self.mu)
        if self.max_iter < 0:
            raise ArgumentError("max_iter must be >= 0")
        return n, mu

    def _fit_labels(self, labels, X):
        N = X.shape[0]
        n, mu = self._check_params(N)
        ds = SparseDataset(sp.csr_matrix(X, dtype=np.float64), labels)
        loss = RegularizedLoss(self._loss_kind, float(self.lam))
        seed = 0 if self.random_state is None else int(self.random_state)
        cluster = Cluster.build(ds, loss, m=self.n_workers, n=n, mu=mu, seed=seed)
        config = alg.AlgorithmConfig("spag", G_min=self.G_min, t0=self.t0,
                                     inner_tol=self.inner_tol).resolved(cluster)
        state = alg.warm_start_state(local_init(cluster), config, t0=config.t0)
        history = []
        gnorm = float(np.linalg.norm(cluster.full_gradient(state.x)))
        for _ in range(self.max_iter):
            if gnorm <= self.tol:
                break
            state, rec = alg.spag_iterate(state, cluster, config, G_min=config.G_min,
                                          inner_tol=config.inner_tol,
                                          inner_max_passes=config.inner_max_passes)
            gnorm = float(np.linalg.norm(cluster.full_gradient(state.x)))
            history.append({"iter": rec.iter, "comm_rounds": rec.comm_rounds, "gain": rec.gain,
                            "inner_passes": rec.inner_passes, "grad_norm": gnorm})
        self.coef_ = state.x
        self.mu_ = mu
        self.n_precond_ = n
        self.n_iter_ = len(history)
        self.comm_rounds_ = cluster.ledger.rounds
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def _validate_X(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def _linear(self, X):
        X = self._validate_X(X)
        return np.asarray(X @ self.coef_).ravel()


class SPAGClassifier(ClassifierMixin, _SPAGBase):
    """Binary logistic regression trained with SPAG.

    >>> clf = SPAGClassifier(lam=1e-3, n_workers=2).fit(X, y)   # doctest: +SKIP
    >>> clf.predict_proba(X[:3])                                 # doctest: +SKIP
    """

    _loss_kind = "logistic"

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValueError(f"SPAGClassifier needs exactly two classes, got {self.classes_.size}")
        return self._fit_labels(np.where(encoded == 1, 1.0, -1.0), X)

    def decision_function(self, X):
        return self._linear(X)

    def predict_proba(self, X):
        z = self.decision_function(X)
        p = np.exp(-np.logaddexp(0.0, -z))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        check_is_fitted(self, "classes_")
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


class SPAGRegressor(RegressorMixin, _SPAGBase):
    """Ridge regression (squared loss) trained with SPAG."""

    _loss_kind = "squared"

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64, y_numeric=True)
        return self._fit_labels(y, X)

    def predict(self, X):
        return self._linear(X)
