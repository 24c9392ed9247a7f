"""Core math for two-arm trial design.

This module holds the pure functions everything else builds on:

* standard-normal CDF / quantile,
* effect definitions r(mu0, mu1) with their partial derivatives,
* the efficiency-bound variance for covariate-adjusted (AIPW-style)
  estimation and the variance of the unadjusted estimator,
* the normal-approximation power formula and the minimal-sample-size
  solver.

The variance bound consumes nine population quantities, bundled in
:class:`PopulationParams`: per-arm marginal outcome standard deviations
``sigma_w``, per-arm root average conditional variances ``kappa_w``
(the root Bayes MSE of predicting the outcome from covariates), the
correlation ``gamma`` between the two conditional mean functions, the
treatment fractions ``pi_w``, and the arm means ``mu_w``.

All functions are pure and deterministic; nothing here touches RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._validation import check_probability, check_positive_int
from .exceptions import InfeasibleDesignError, ValidationError

__all__ = [
    "EffectDefinition",
    "DIFFERENCE_IN_MEANS",
    "ODDS_RATIO",
    "PopulationParams",
    "DesignInputs",
    "normal_cdf",
    "normal_quantile",
    "effect_and_derivatives",
    "efficient_variance",
    "unadjusted_variance",
    "power",
    "required_sample_size",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-float(z) / _SQRT2)


# Rational approximation for the inverse normal CDF (Acklam's minimax
# coefficients), polished below with Halley steps against the erfc-based
# CDF so the round-trip |cdf(quantile(p)) - p| stays under 1e-12.
_Q_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
        1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_Q_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
        6.680131188771972e+01, -1.328068155288572e+01)
_Q_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
        -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_Q_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
        3.754408661907416e+00)
_Q_SPLIT = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf` on (0, 1).

    Raises
    ------
    ValidationError
        If ``p`` is outside the open unit interval.
    """
    p = float(p)
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise ValidationError(f"normal_quantile requires p in (0, 1), got {p}")

    if p < _Q_SPLIT:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_Q_C[0] * q + _Q_C[1]) * q + _Q_C[2]) * q + _Q_C[3]) * q + _Q_C[4]) * q + _Q_C[5])
             / ((((_Q_D[0] * q + _Q_D[1]) * q + _Q_D[2]) * q + _Q_D[3]) * q + 1.0))
    elif p <= 1.0 - _Q_SPLIT:
        q = p - 0.5
        r = q * q
        x = ((((((_Q_A[0] * r + _Q_A[1]) * r + _Q_A[2]) * r + _Q_A[3]) * r + _Q_A[4]) * r + _Q_A[5]) * q
             / (((((_Q_B[0] * r + _Q_B[1]) * r + _Q_B[2]) * r + _Q_B[3]) * r + _Q_B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_Q_C[0] * q + _Q_C[1]) * q + _Q_C[2]) * q + _Q_C[3]) * q + _Q_C[4]) * q + _Q_C[5])
              / ((((_Q_D[0] * q + _Q_D[1]) * q + _Q_D[2]) * q + _Q_D[3]) * q + 1.0))

    # Halley refinement; skipped in the far tail where exp(x^2/2) would
    # overflow (there the rational approximation's absolute error is
    # already far below the round-trip tolerance).
    for _ in range(2):
        if x * x >= 1400.0:
            break
        err = normal_cdf(x) - p
        u = err * _SQRT_2PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


@dataclass(frozen=True)
class EffectDefinition:
    """A treatment-effect functional r(mu0, mu1) of the two arm means.

    Two kinds are supported:

    * ``"difference"``: r = mu1 - mu0, defined for all real means.
    * ``"odds_ratio"``: r = [mu1/(1-mu1)] / [mu0/(1-mu0)], defined for
      means strictly inside (0, 1).

    Both are nonincreasing in mu0 and nondecreasing in mu1. ``null_value``
    is the value of r when the arms do not differ (0 for the difference,
    1 for the odds ratio); tests and power calculations measure evidence
    against it.
    """

    kind: str

    _KINDS = ("difference", "odds_ratio")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValidationError(f"unknown effect kind {self.kind!r}; expected one of {self._KINDS}")

    @classmethod
    def difference_in_means(cls) -> "EffectDefinition":
        return cls("difference")

    @classmethod
    def odds_ratio(cls) -> "EffectDefinition":
        return cls("odds_ratio")

    @classmethod
    def from_name(cls, name: str) -> "EffectDefinition":
        key = str(name).strip().lower().replace("-", "_")
        if key in ("diff", "difference", "difference_in_means"):
            return cls("difference")
        if key in ("or", "odds_ratio", "oddsratio"):
            return cls("odds_ratio")
        raise ValidationError(f"unknown effect name {name!r}; use 'diff' or 'or'")

    @property
    def null_value(self) -> float:
        return 0.0 if self.kind == "difference" else 1.0

    def _check_mean(self, mu: float, name: str) -> float:
        mu = float(mu)
        if not math.isfinite(mu):
            raise ValidationError(f"{name} must be finite, got {mu}")
        if self.kind == "odds_ratio" and not 0.0 < mu < 1.0:
            raise ValidationError(f"odds-ratio effects need {name} strictly in (0, 1), got {mu}")
        return mu

    def value(self, mu0: float, mu1: float) -> float:
        mu0 = self._check_mean(mu0, "mu0")
        mu1 = self._check_mean(mu1, "mu1")
        if self.kind == "difference":
            return mu1 - mu0
        return (mu1 / (1.0 - mu1)) / (mu0 / (1.0 - mu0))

    def derivatives(self, mu0: float, mu1: float) -> tuple[float, float]:
        """Partial derivatives (d r / d mu0, d r / d mu1) at (mu0, mu1)."""
        mu0 = self._check_mean(mu0, "mu0")
        mu1 = self._check_mean(mu1, "mu1")
        if self.kind == "difference":
            return -1.0, 1.0
        odds1 = mu1 / (1.0 - mu1)
        r0p = -odds1 / (mu0 * mu0)
        r1p = ((1.0 - mu0) / mu0) / ((1.0 - mu1) * (1.0 - mu1))
        return r0p, r1p

    def invert_mu1(self, mu0: float, tau: float) -> float:
        """Solve r(mu0, mu1) = tau for mu1."""
        mu0 = self._check_mean(mu0, "mu0")
        tau = float(tau)
        if not math.isfinite(tau):
            raise ValidationError(f"target effect must be finite, got {tau}")
        if self.kind == "difference":
            return mu0 + tau
        if tau <= 0.0:
            raise ValidationError(f"odds-ratio targets must be positive, got {tau}")
        odds1 = tau * mu0 / (1.0 - mu0)
        return odds1 / (1.0 + odds1)


DIFFERENCE_IN_MEANS = EffectDefinition.difference_in_means()
ODDS_RATIO = EffectDefinition.odds_ratio()


def effect_and_derivatives(effect: EffectDefinition, mu0: float, mu1: float) -> tuple[float, float, float]:
    """Return (r(mu0, mu1), dr/dmu0, dr/dmu1) in one call."""
    tau = effect.value(mu0, mu1)
    r0p, r1p = effect.derivatives(mu0, mu1)
    return tau, r0p, r1p


@dataclass(frozen=True)
class PopulationParams:
    """Population quantities the variance formulas consume.

    ``kappa_w <= sigma_w`` is required per arm (law of total variance);
    estimation code clamps noisy estimates before building this object.
    """

    sigma0: float
    sigma1: float
    kappa0: float
    kappa1: float
    gamma: float
    pi0: float
    pi1: float
    mu0: float
    mu1: float

    def __post_init__(self):
        for name in ("sigma0", "sigma1", "kappa0", "kappa1", "gamma", "pi0", "pi1", "mu0", "mu1"):
            v = getattr(self, name)
            if not math.isfinite(float(v)):
                raise ValidationError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))
        for w in (0, 1):
            sigma = getattr(self, f"sigma{w}")
            kappa = getattr(self, f"kappa{w}")
            if sigma < 0.0:
                raise ValidationError(f"sigma{w} must be nonnegative, got {sigma}")
            if not 0.0 <= kappa <= sigma:
                raise ValidationError(
                    f"kappa{w}={kappa} must satisfy 0 <= kappa{w} <= sigma{w}={sigma}")
        if not -1.0 <= self.gamma <= 1.0:
            raise ValidationError(f"gamma must lie in [-1, 1], got {self.gamma}")
        check_probability(self.pi0, "pi0")
        check_probability(self.pi1, "pi1")
        if abs(self.pi0 + self.pi1 - 1.0) > 1e-12:
            raise ValidationError(f"pi0 + pi1 must equal 1, got {self.pi0 + self.pi1}")

    def to_dict(self) -> dict:
        return {
            "sigma0": self.sigma0, "sigma1": self.sigma1,
            "kappa0": self.kappa0, "kappa1": self.kappa1,
            "gamma": self.gamma, "pi0": self.pi0, "pi1": self.pi1,
            "mu0": self.mu0, "mu1": self.mu1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationParams":
        required = ("sigma0", "sigma1", "kappa0", "kappa1", "gamma", "pi0", "pi1", "mu0", "mu1")
        missing = [k for k in required if k not in d]
        if missing:
            raise ValidationError(f"population params missing fields: {', '.join(missing)}")
        return cls(**{k: float(d[k]) for k in required})


@dataclass(frozen=True)
class DesignInputs:
    """Everything the sample-size solver needs besides the variance."""

    effect: EffectDefinition
    params: PopulationParams
    alpha: float = 0.05
    target_power: float = 0.8

    def __post_init__(self):
        check_probability(self.alpha, "alpha")
        check_probability(self.target_power, "target_power")
        if self.target_power <= self.alpha:
            raise ValidationError(
                f"target_power={self.target_power} must exceed alpha={self.alpha}")
        # fail fast if the arm means are outside the effect's domain
        self.effect.value(self.params.mu0, self.params.mu1)


def efficient_variance(effect: EffectDefinition, params: PopulationParams) -> float:
    """Asymptotic-variance lower bound for estimating r(mu0, mu1).

    For derivatives r0', r1' evaluated at the arm means:

        r0'^2 (pi1/pi0 * kappa0^2 + sigma0^2)
      + r1'^2 (pi0/pi1 * kappa1^2 + sigma1^2)
      - 2 |r0' r1'| gamma sqrt((sigma0^2 - kappa0^2)(sigma1^2 - kappa1^2))

    The square-root argument is nonnegative whenever the params invariants
    hold; a max(0, .) guard only absorbs float round-off at kappa == sigma.
    """
    r0p, r1p = effect.derivatives(params.mu0, params.mu1)
    s0sq, s1sq = params.sigma0 ** 2, params.sigma1 ** 2
    k0sq, k1sq = params.kappa0 ** 2, params.kappa1 ** 2
    arm0 = r0p * r0p * (params.pi1 / params.pi0 * k0sq + s0sq)
    arm1 = r1p * r1p * (params.pi0 / params.pi1 * k1sq + s1sq)
    cross = 2.0 * abs(r0p * r1p) * params.gamma * math.sqrt(
        max(0.0, s0sq - k0sq) * max(0.0, s1sq - k1sq))
    return arm0 + arm1 - cross


def unadjusted_variance(effect: EffectDefinition, params: PopulationParams) -> float:
    """Asymptotic variance of the unadjusted (arm-means) estimator."""
    r0p, r1p = effect.derivatives(params.mu0, params.mu1)
    return (r0p * r0p * params.sigma0 ** 2 / params.pi0
            + r1p * r1p * params.sigma1 ** 2 / params.pi1)


def power(n: int, tau: float, tau_null: float, nu: float, alpha: float) -> float:
    """Probability of a significant two-sided level-alpha test.

    With effect distance Delta = tau - tau_null and asymptotic variance
    nu^2 / n:

        Phi(Phi^-1(alpha/2) + sqrt(n) Delta / nu)
      + Phi(Phi^-1(alpha/2) - sqrt(n) Delta / nu)

    At tau == tau_null this equals alpha exactly.
    """
    n = check_positive_int(n, "n")
    nu = float(nu)
    if not nu > 0.0:
        raise ValidationError(f"nu must be positive, got {nu}")
    alpha = check_probability(alpha, "alpha")
    za = normal_quantile(alpha / 2.0)
    shift = math.sqrt(n) * (float(tau) - float(tau_null)) / nu
    return normal_cdf(za + shift) + normal_cdf(za - shift)


def required_sample_size(inputs: DesignInputs, nu: float, max_n: int = 10_000_000) -> int:
    """Smallest n whose power strictly exceeds the target.

    Uses a geometric bracket plus bisection; power is monotone in n for a
    nonzero effect distance, so the minimality post-condition
    ``power(n-1) <= target < power(n)`` is exact.

    Raises
    ------
    InfeasibleDesignError
        If power at ``max_n`` still does not exceed the target (always the
        case when tau equals the null value); carries ``achieved_power``.
    """
    nu = float(nu)
    if not nu > 0.0:
        raise ValidationError(f"nu must be positive, got {nu}")
    max_n = check_positive_int(max_n, "max_n")
    tau = inputs.effect.value(inputs.params.mu0, inputs.params.mu1)
    tau_null = inputs.effect.null_value

    def p(n: int) -> float:
        return power(n, tau, tau_null, nu, inputs.alpha)

    if p(max_n) <= inputs.target_power:
        raise InfeasibleDesignError(
            f"target power {inputs.target_power} unreachable within max_n={max_n}: "
            f"power(max_n)={p(max_n):.6f}",
            achieved_power=p(max_n))
    if p(1) > inputs.target_power:
        return 1
    lo, hi = 1, 2
    while p(hi) <= inputs.target_power:
        lo = hi
        hi = min(hi * 2, max_n)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if p(mid) > inputs.target_power:
            hi = mid
        else:
            lo = mid
    return hi
