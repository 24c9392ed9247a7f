"""Regression learners and cross-validation utilities.

Everything follows the familiar estimator protocol: hyperparameters go to
``__init__`` unchanged, ``fit(X, y)`` returns ``self`` and stores trained
state in trailing-underscore attributes, ``predict(X)`` maps a feature
matrix to a response vector, and ``get_params`` / ``set_params`` expose the
constructor arguments. ``clone_learner`` produces a fresh unfitted copy,
which is how cross-validation gets an untouched model per fold.

The learners themselves are implemented from scratch (ordinary least
squares with a ridge fallback for singular designs, k-nearest-neighbor
averaging, gradient-boosted regression trees, and a cross-validated
selection ensemble); the tree and neighbor loops are compiled in
``_trees``.

Determinism: given identical hyperparameters, data, and ``random_state``,
fits and predictions are bit-identical. ``random_state=None`` means seed 0,
not "fresh entropy".
"""

from __future__ import annotations

import inspect

import numpy as np

from . import _trees
from ._linalg import solve_normal_equations
from ._validation import (
    check_matrix,
    check_positive_int,
    check_random_state,
    check_vector,
)
from .exceptions import ValidationError

__all__ = [
    "BaseLearner",
    "ZeroRegressor",
    "LinearRegressor",
    "KNNRegressor",
    "BoostedTreesRegressor",
    "SelectingEnsembleRegressor",
    "clone_learner",
    "kfold_indices",
    "cross_val_mse",
    "cross_val_rmse",
    "parse_learner",
    "default_ensemble_members",
]


class BaseLearner:
    """Parameter-introspection base shared by all learners."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = self._param_names()
        for name, value in params.items():
            if name not in valid:
                raise ValidationError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"

    def _check_fitted(self):
        if not hasattr(self, "n_features_in_"):
            raise ValidationError(f"{type(self).__name__} is not fitted")

    def _check_predict_input(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"predict expected {self.n_features_in_} features, got {X.shape[1]}")
        return X


def clone_learner(learner: BaseLearner) -> BaseLearner:
    """Fresh unfitted copy with the same hyperparameters."""
    params = {}
    for name, value in learner.get_params().items():
        if isinstance(value, BaseLearner):
            value = clone_learner(value)
        elif isinstance(value, (list, tuple)):
            value = type(value)(
                clone_learner(v) if isinstance(v, BaseLearner) else v for v in value)
        params[name] = value
    return type(learner)(**params)


class ZeroRegressor(BaseLearner):
    """Predicts 0 everywhere. A testing hook, not a model.

    With zero predictions the augmentation terms of the adjusted estimator
    vanish, which makes its arithmetic checkable by hand.
    """

    def __init__(self):
        pass

    def fit(self, X, y):
        X = check_matrix(X, "X")
        check_vector(y, n=X.shape[0], name="y")
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_predict_input(X)
        return np.zeros(X.shape[0], dtype=np.float64)


class LinearRegressor(BaseLearner):
    """Ordinary least squares with an intercept.

    The normal equations are solved by Cholesky factorization. If the
    factorization fails (collinear or constant columns), a ridge of
    ``1e-8 * trace(X'X)/d`` is added to the covariate diagonal and the
    solve is retried; well-posed fits are never perturbed.
    """

    def __init__(self):
        pass

    def fit(self, X, y):
        X = check_matrix(X, "X")
        y = check_vector(y, n=X.shape[0], name="y")
        n, d = X.shape
        A = np.empty((n, d + 1), dtype=np.float64)
        A[:, 0] = 1.0
        A[:, 1:] = X
        beta, _ = solve_normal_equations(A.T @ A, A.T @ y, n_covariates=d)
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:].copy()
        self.n_features_in_ = d
        return self

    def predict(self, X):
        X = self._check_predict_input(X)
        return X @ self.coef_ + self.intercept_


class KNNRegressor(BaseLearner):
    """k-nearest-neighbor mean under unscaled Euclidean distance.

    Uniform weights; distance ties resolved toward the lower training-row
    index; k is capped at the training-set size.
    """

    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, X, y):
        check_positive_int(self.k, "k")
        X = check_matrix(X, "X")
        y = check_vector(y, n=X.shape[0], name="y")
        self.X_train_ = X
        self.y_train_ = y
        self.k_effective_ = min(int(self.k), X.shape[0])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_predict_input(X)
        return _trees.knn_predict(self.X_train_, self.y_train_, X,
                                  np.int64(self.k_effective_))


class BoostedTreesRegressor(BaseLearner):
    """Gradient-boosted regression trees on squared error.

    Stagewise fitting: start from the training mean, then repeatedly fit a
    depth-limited tree to the residuals and add ``learning_rate`` times its
    leaf means. Split search scans midpoints of sorted unique feature
    values exactly, maximizing SSE reduction, ties broken by (feature
    index, threshold).
    """

    def __init__(self, n_trees: int = 50, max_depth: int = 5,
                 learning_rate: float = 0.1, min_samples_leaf: int = 1):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        check_positive_int(self.n_trees, "n_trees")
        check_positive_int(self.max_depth, "max_depth")
        check_positive_int(self.min_samples_leaf, "min_samples_leaf")
        if not float(self.learning_rate) > 0.0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        X = check_matrix(X, "X")
        y = check_vector(y, n=X.shape[0], name="y")
        (self.features_, self.thresholds_, self.values_, self.lefts_, self.rights_,
         self.base_, self.train_mse_path_) = _trees.boost_fit(
            X, y, np.int64(self.n_trees), np.int64(self.max_depth),
            np.float64(self.learning_rate), np.int64(self.min_samples_leaf))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_predict_input(X)
        return _trees.boost_predict(self.features_, self.thresholds_, self.values_,
                                    self.lefts_, self.rights_, self.base_,
                                    np.float64(self.learning_rate), X)


def default_ensemble_members() -> list[BaseLearner]:
    """Linear regression, 5-NN, and 50 depth-5 boosted trees."""
    return [LinearRegressor(), KNNRegressor(k=5), BoostedTreesRegressor(n_trees=50, max_depth=5)]


class SelectingEnsembleRegressor(BaseLearner):
    """Cross-validated selection among member learners.

    ``fit`` evaluates every member on the same seeded ``selection_folds``
    partition of the training data, picks the member with the smallest
    pooled held-out MSE (ties keep the earliest member), and refits that
    winner on all rows. Selection is a model choice, not stacking: the
    prediction comes from the single refit winner.
    """

    def __init__(self, members: list[BaseLearner] | None = None,
                 selection_folds: int = 5, random_state: int | None = 0):
        self.members = members
        self.selection_folds = selection_folds
        self.random_state = random_state

    def _resolved_members(self) -> list[BaseLearner]:
        members = self.members if self.members is not None else default_ensemble_members()
        if not members:
            raise ValidationError("ensemble needs at least one member")
        return list(members)

    def fit(self, X, y):
        folds = check_positive_int(self.selection_folds, "selection_folds", minimum=2)
        X = check_matrix(X, "X")
        y = check_vector(y, n=X.shape[0], name="y")
        members = self._resolved_members()
        rng = check_random_state(self.random_state)
        parts = kfold_indices(X.shape[0], folds, rng)
        mses = np.empty(len(members), dtype=np.float64)
        for j, member in enumerate(members):
            mses[j] = _pooled_cv_mse(member, X, y, parts)
        self.cv_mses_ = mses
        self.selected_index_ = int(np.argmin(mses))
        self.model_ = clone_learner(members[self.selected_index_]).fit(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_predict_input(X)
        return self.model_.predict(X)


def kfold_indices(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Seeded random partition of range(n) into ``folds`` near-equal folds."""
    folds = check_positive_int(folds, "folds", minimum=2)
    if folds > n:
        raise ValidationError(f"folds={folds} exceeds the number of rows n={n}")
    perm = rng.permutation(n)
    return np.array_split(perm, folds)


def _pooled_cv_mse(learner: BaseLearner, X: np.ndarray, y: np.ndarray,
                   parts: list[np.ndarray]) -> float:
    n = X.shape[0]
    preds = np.empty(n, dtype=np.float64)
    mask = np.ones(n, dtype=bool)
    for held_out in parts:
        mask[:] = True
        mask[held_out] = False
        model = clone_learner(learner).fit(X[mask], y[mask])
        preds[held_out] = model.predict(X[held_out])
    return float(np.mean((preds - y) ** 2))


def cross_val_mse(learner: BaseLearner, X, y, folds: int = 5,
                  random_state: int | None = None) -> float:
    """Pooled K-fold cross-validated mean squared prediction error.

    Each row is predicted exactly once, by a model fit without its fold.
    When ``learner`` is a :class:`SelectingEnsembleRegressor` the member
    selection happens inside each training split, i.e. the selection is
    nested within the outer folds.
    """
    X = check_matrix(X, "X")
    y = check_vector(y, n=X.shape[0], name="y")
    rng = check_random_state(random_state)
    parts = kfold_indices(X.shape[0], folds, rng)
    return _pooled_cv_mse(learner, X, y, parts)


def cross_val_rmse(learner: BaseLearner, X, y, folds: int = 5,
                   random_state: int | None = None) -> float:
    """Square root of :func:`cross_val_mse`."""
    return float(np.sqrt(cross_val_mse(learner, X, y, folds=folds, random_state=random_state)))


def parse_learner(spec: str) -> BaseLearner:
    """Build a learner from a CLI-style string.

    Accepted: ``ols``, ``knn`` or ``knn:<k>``, ``gbm``, ``ensemble``, and
    the predict-zero testing hook ``null``.
    """
    text = str(spec).strip().lower()
    name, _, arg = text.partition(":")
    if name == "ols":
        if arg:
            raise ValidationError("ols takes no parameter")
        return LinearRegressor()
    if name == "knn":
        k = 5
        if arg:
            try:
                k = int(arg)
            except ValueError as exc:
                raise ValidationError(f"invalid k in learner spec {spec!r}") from exc
        return KNNRegressor(k=k)
    if name == "gbm":
        if arg:
            raise ValidationError("gbm takes no parameter")
        return BoostedTreesRegressor()
    if name == "ensemble":
        if arg:
            raise ValidationError("ensemble takes no parameter")
        return SelectingEnsembleRegressor()
    if name == "null":
        return ZeroRegressor()
    raise ValidationError(
        f"unknown learner spec {spec!r}; use ensemble, ols, knn[:k], or gbm")
