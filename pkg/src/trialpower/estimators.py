"""Trial-analysis estimators.

Four ways to turn a completed two-arm trial (covariates X, assignments w,
outcomes y) into an effect estimate with a standard error:

* :class:`UnadjustedEstimator`: effect of the raw arm means.
* :class:`AncovaEstimator`: linear regression of y on [1, w, X] with an
  HC0 sandwich standard error (difference effects only).
* :class:`AipwEstimator`: augmented inverse-propensity weighting with
  cross-fitted conditional-mean models: each subject's predictions come
  from models trained without that subject's fold.
* :class:`OracleAipwEstimator`: the same arithmetic with user-supplied
  true conditional-mean functions and no fitting; the benchmark the
  cross-fit estimator is chasing.

Estimators follow the fit-then-read protocol: ``fit(X, w, y)`` returns
``self`` and stores an :class:`EstimateResult` in ``result_``.

Standard errors for the unadjusted and AIPW estimators are plug-in
influence-function estimates: se = sqrt(mean(influence^2) / n). The arm
means enter the effect scale through the delta method, so the influence
values combine per-arm scores with the effect derivatives at the estimated
means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._linalg import solve_normal_equations
from ._validation import (
    check_binary_vector,
    check_matrix,
    check_positive_int,
    check_probability,
    check_random_state,
    check_vector,
)
from .core import (
    DIFFERENCE_IN_MEANS,
    EffectDefinition,
    effect_and_derivatives,
    normal_cdf,
    normal_quantile,
)
from .exceptions import ValidationError
from .learners import BaseLearner, SelectingEnsembleRegressor, clone_learner

__all__ = [
    "EstimateResult",
    "UnadjustedEstimator",
    "AncovaEstimator",
    "AipwEstimator",
    "OracleAipwEstimator",
]


@dataclass
class EstimateResult:
    """Effect estimate with Wald inference and per-subject influence values.

    ``significant`` is exactly ``p_value < alpha``. When the standard
    error degenerates to zero (constant outcomes), the p-value is defined
    as 1 if the estimate equals the null value and 0 otherwise, and
    ``degenerate_se`` is set.
    """

    tau_hat: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    significant: bool
    mu0_hat: float
    mu1_hat: float
    influence: np.ndarray = field(repr=False)
    alpha: float
    tau_null: float
    degenerate_se: bool = False

    @property
    def n(self) -> int:
        return int(self.influence.shape[0])

    def to_dict(self, include_influence: bool = False) -> dict:
        out = {
            "tau_hat": self.tau_hat,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_value": self.p_value,
            "significant": self.significant,
            "mu0_hat": self.mu0_hat,
            "mu1_hat": self.mu1_hat,
            "alpha": self.alpha,
            "tau_null": self.tau_null,
            "degenerate_se": self.degenerate_se,
            "n": self.n,
        }
        if include_influence:
            out["influence"] = [float(v) for v in self.influence]
        return out


def _wald_result(tau: float, se: float, mu0: float, mu1: float,
                 influence: np.ndarray, effect: EffectDefinition,
                 alpha: float) -> EstimateResult:
    tau_null = effect.null_value
    if se > 0.0:
        z = (tau - tau_null) / se
        p_value = 2.0 * normal_cdf(-abs(z))
        half = normal_quantile(1.0 - alpha / 2.0) * se
        ci_low, ci_high = tau - half, tau + half
        degenerate = False
    else:
        p_value = 1.0 if tau == tau_null else 0.0
        ci_low = ci_high = tau
        degenerate = True
    return EstimateResult(
        tau_hat=float(tau), se=float(se), ci_low=float(ci_low), ci_high=float(ci_high),
        p_value=float(p_value), significant=bool(p_value < alpha),
        mu0_hat=float(mu0), mu1_hat=float(mu1), influence=influence,
        alpha=float(alpha), tau_null=float(tau_null), degenerate_se=degenerate)


class _TrialEstimator(BaseLearner):
    """Shared validation: both arms present, shapes line up."""

    def _validate_trial(self, X, w, y):
        X = check_matrix(X, "X")
        n = X.shape[0]
        w = check_binary_vector(w, n=n, name="w")
        y = check_vector(y, n=n, name="y")
        n1 = int(w.sum())
        if n1 == 0 or n1 == n:
            raise ValidationError("both arms must be nonempty")
        check_probability(self.alpha, "alpha")
        return X, w, y


class UnadjustedEstimator(_TrialEstimator):
    """Effect of the raw arm means, with empirical-fraction weighting.

    The influence values use the empirical arm fractions
    ``pi_hat_w = n_w / n``, which makes them mean-zero by construction:
    ``phi_i = r0' (W0_i/pi_hat_0)(y_i - mu0_hat)
            + r1' (W1_i/pi_hat_1)(y_i - mu1_hat)``.
    """

    def __init__(self, effect: EffectDefinition = DIFFERENCE_IN_MEANS, alpha: float = 0.05):
        self.effect = effect
        self.alpha = alpha

    def fit(self, X, w, y):
        X, w, y = self._validate_trial(X, w, y)
        n = X.shape[0]
        is1 = w == 1.0
        mu0 = float(y[~is1].mean())
        mu1 = float(y[is1].mean())
        pi1_hat = is1.mean()
        pi0_hat = 1.0 - pi1_hat
        tau, r0p, r1p = effect_and_derivatives(self.effect, mu0, mu1)
        phi = (r0p * (~is1 / pi0_hat) * (y - mu0)
               + r1p * (is1 / pi1_hat) * (y - mu1))
        se = math.sqrt(float(np.mean(phi ** 2)) / n)
        self.n_features_in_ = X.shape[1]
        self.result_ = _wald_result(tau, se, mu0, mu1, phi, self.effect, self.alpha)
        return self


class AncovaEstimator(_TrialEstimator):
    """Main-terms ANCOVA with an HC0 sandwich standard error.

    Regresses y on [1, w, x1..xd]; the effect estimate is the coefficient
    on w and its variance is the (w, w) entry of
    ``(A'A)^-1 A' diag(e^2) A (A'A)^-1`` with raw residuals e. Only
    difference-in-means effects make sense here.
    """

    def __init__(self, effect: EffectDefinition = DIFFERENCE_IN_MEANS, alpha: float = 0.05):
        self.effect = effect
        self.alpha = alpha

    def fit(self, X, w, y):
        if self.effect.kind != "difference":
            raise ValidationError("ANCOVA supports difference-in-means effects only")
        X, w, y = self._validate_trial(X, w, y)
        n, d = X.shape
        if d >= n - 2:
            raise ValidationError(
                f"ANCOVA needs at least d + 3 rows; got n={n}, d={d}")
        A = np.empty((n, d + 2), dtype=np.float64)
        A[:, 0] = 1.0
        A[:, 1] = w
        A[:, 2:] = X
        beta, G_used = solve_normal_equations(A.T @ A, A.T @ y, n_covariates=d)
        e = y - A @ beta
        G_inv = np.linalg.inv(G_used)
        B = (A * (e * e)[:, None]).T @ A
        V = G_inv @ B @ G_inv
        tau = float(beta[1])
        se = math.sqrt(max(0.0, float(V[1, 1])))
        # influence representation of the sandwich: phi_i = n * [(A'A)^-1 a_i]_w * e_i
        phi = n * (A @ G_inv[:, 1]) * e
        is1 = w == 1.0
        self.n_features_in_ = d
        self.result_ = _wald_result(tau, se, float(y[~is1].mean()), float(y[is1].mean()),
                                    phi, self.effect, self.alpha)
        return self


def _aipw_result(w: np.ndarray, y: np.ndarray, m0: np.ndarray, m1: np.ndarray,
                 pi1: float, effect: EffectDefinition, alpha: float) -> EstimateResult:
    """AIPW arithmetic shared by the cross-fit and oracle estimators.

    With design probabilities pi_w and conditional-mean values m_w:

        mu_w_hat = mean( W_w/pi_w * (y - m_w) + m_w )
        phi_i    = r0' [W0_i/pi0 (y_i - m0_i) + m0_i - mu0_hat]
                 + r1' [W1_i/pi1 (y_i - m1_i) + m1_i - mu1_hat]
        se       = sqrt(mean(phi^2) / n)
    """
    n = y.shape[0]
    pi0 = 1.0 - pi1
    is1 = w == 1.0
    score0 = (~is1 / pi0) * (y - m0) + m0
    score1 = (is1 / pi1) * (y - m1) + m1
    mu0 = float(score0.mean())
    mu1 = float(score1.mean())
    tau, r0p, r1p = effect_and_derivatives(effect, mu0, mu1)
    phi = r0p * (score0 - mu0) + r1p * (score1 - mu1)
    se = math.sqrt(float(np.mean(phi ** 2)) / n)
    return _wald_result(tau, se, mu0, mu1, phi, effect, alpha)


class AipwEstimator(_TrialEstimator):
    """Cross-fit AIPW with a configurable conditional-mean learner.

    Rows are split into ``n_folds`` seeded folds, stratified by arm so
    every fold preserves the randomization ratio. For each fold k and arm
    w, a fresh clone of the learner is trained on the out-of-fold arm-w
    rows and predicts mu_w for every row in fold k, so no subject's
    prediction ever comes from a model that saw that subject.

    ``pi1`` is the known randomization probability of the design, not the
    empirical treated fraction.
    """

    def __init__(self, learner: BaseLearner | None = None, n_folds: int = 10,
                 effect: EffectDefinition = DIFFERENCE_IN_MEANS, alpha: float = 0.05,
                 pi1: float = 0.5, random_state: int | None = 0):
        self.learner = learner
        self.n_folds = n_folds
        self.effect = effect
        self.alpha = alpha
        self.pi1 = pi1
        self.random_state = random_state

    def fit(self, X, w, y):
        X, w, y = self._validate_trial(X, w, y)
        pi1 = check_probability(self.pi1, "pi1")
        n_folds = check_positive_int(self.n_folds, "n_folds", minimum=2)
        learner = self.learner if self.learner is not None else SelectingEnsembleRegressor()
        rng = check_random_state(self.random_state)

        arm_rows = (np.flatnonzero(w == 0.0), np.flatnonzero(w == 1.0))
        smallest = min(arm_rows[0].shape[0], arm_rows[1].shape[0])
        if smallest < n_folds:
            raise ValidationError(
                f"n_folds={n_folds} leaves an arm empty in some fold "
                f"(smallest arm has {smallest} rows); use fewer folds")
        groups = tuple(np.array_split(rng.permutation(rows), n_folds) for rows in arm_rows)

        n = X.shape[0]
        m0 = np.empty(n, dtype=np.float64)
        m1 = np.empty(n, dtype=np.float64)
        for k in range(n_folds):
            held_out = np.concatenate((groups[0][k], groups[1][k]))
            X_held = X[held_out]
            for arm, m_arr in ((0, m0), (1, m1)):
                train = np.concatenate([g for j, g in enumerate(groups[arm]) if j != k])
                model = clone_learner(learner).fit(X[train], y[train])
                m_arr[held_out] = model.predict(X_held)

        self.n_features_in_ = X.shape[1]
        self.result_ = _aipw_result(w, y, m0, m1, pi1, self.effect, self.alpha)
        return self


class OracleAipwEstimator(_TrialEstimator):
    """AIPW with known conditional-mean functions; no folds, no fitting.

    ``mu0_fn`` / ``mu1_fn`` may be vectorized (matrix in, vector out) or
    act on single covariate vectors; both conventions are accepted.
    """

    def __init__(self, mu0_fn, mu1_fn, effect: EffectDefinition = DIFFERENCE_IN_MEANS,
                 alpha: float = 0.05, pi1: float = 0.5):
        self.mu0_fn = mu0_fn
        self.mu1_fn = mu1_fn
        self.effect = effect
        self.alpha = alpha
        self.pi1 = pi1

    def fit(self, X, w, y):
        X, w, y = self._validate_trial(X, w, y)
        pi1 = check_probability(self.pi1, "pi1")
        m0 = _oracle_predictions(self.mu0_fn, X, "mu0_fn")
        m1 = _oracle_predictions(self.mu1_fn, X, "mu1_fn")
        self.n_features_in_ = X.shape[1]
        self.result_ = _aipw_result(w, y, m0, m1, pi1, self.effect, self.alpha)
        return self


def _oracle_predictions(fn, X: np.ndarray, name: str) -> np.ndarray:
    n = X.shape[0]
    try:
        out = np.asarray(fn(X), dtype=np.float64)
        if out.shape == (n,):
            return out
    except Exception:
        pass
    try:
        out = np.array([float(fn(X[i])) for i in range(n)], dtype=np.float64)
    except Exception as exc:
        raise ValidationError(f"{name} is not callable on covariate rows: {exc}") from exc
    return out
