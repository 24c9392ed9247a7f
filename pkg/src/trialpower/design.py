"""Prospective trial design from historical control-arm data.

Workflow: historical observations of the standard-of-care outcome
(covariates X, outcome y0) yield estimates of the population quantities a
power calculation needs: the marginal outcome SD, the average
conditional SD (how well covariates predict the outcome, measured by
cross-validated RMSE), and the arm means implied by the target effect.
:func:`plan_trial` then turns those estimates into required sample sizes
for both the covariate-adjusted and the unadjusted analysis.

Single-arm historical data cannot identify treatment-arm quantities, so
the estimates lean on explicit conservative defaults: the treatment arm
inherits the control arm's SD and RMSE, and the cross-arm correlation
credit gamma defaults to 0. Every such substitution is recorded as a
string in the ``assumptions`` ledger of the returned objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    check_matrix,
    check_positive_int,
    check_probability,
    check_random_state,
    check_vector,
)
from .core import (
    DesignInputs,
    EffectDefinition,
    PopulationParams,
    efficient_variance,
    required_sample_size,
    unadjusted_variance,
)
from .exceptions import DataError, InfeasibleDesignError, ValidationError
from .learners import BaseLearner, SelectingEnsembleRegressor, cross_val_rmse

__all__ = [
    "ParamsEstimate",
    "DesignReport",
    "estimate_population_params",
    "plan_trial",
    "split_allocation",
]


@dataclass
class ParamsEstimate:
    """Population parameters estimated from historical data, plus provenance.

    ``assumptions`` records the substitutions single-arm data forces
    (shared SDs, gamma default, target-effect inversion); ``warnings``
    records data-driven adjustments such as clamping the CV RMSE at the
    marginal SD.
    """

    params: PopulationParams
    assumptions: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    cv_rmse_raw: float = float("nan")
    n_rows: int = 0

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "assumptions": list(self.assumptions),
            "warnings": list(self.warnings),
            "cv_rmse_raw": self.cv_rmse_raw,
            "n_rows": self.n_rows,
        }


@dataclass
class DesignReport:
    """Sample-size recommendation comparing adjusted and unadjusted analyses."""

    params: PopulationParams
    effect_kind: str
    target_effect: float
    alpha: float
    target_power: float
    nu_sq_aipw: float
    nu_sq_unadj: float
    n_aipw: int
    n_unadj: int
    allocation_aipw: tuple[int, int]
    allocation_unadj: tuple[int, int]
    assumptions: list[str] = field(default_factory=list)

    @property
    def savings(self) -> float:
        """Fraction of enrollment avoided by the adjusted analysis."""
        return 1.0 - self.n_aipw / self.n_unadj

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "effect": self.effect_kind,
            "target_effect": self.target_effect,
            "alpha": self.alpha,
            "target_power": self.target_power,
            "nu_sq_aipw": self.nu_sq_aipw,
            "nu_sq_unadj": self.nu_sq_unadj,
            "n_aipw": self.n_aipw,
            "n_unadj": self.n_unadj,
            "allocation_aipw": {"n0": self.allocation_aipw[0], "n1": self.allocation_aipw[1]},
            "allocation_unadj": {"n0": self.allocation_unadj[0], "n1": self.allocation_unadj[1]},
            "savings": self.savings,
            "assumptions": list(self.assumptions),
        }


def split_allocation(n: int, pi1: float) -> tuple[int, int]:
    """Split total enrollment n into integer (n0, n1) closest to (1-pi1, pi1).

    Exact half-subjects go to the larger arm so the split is deterministic
    and sums to n.
    """
    n = check_positive_int(n, "n")
    pi1 = check_probability(pi1, "pi1")
    exact1 = n * pi1
    n1 = math.floor(exact1)
    frac = exact1 - n1
    if frac > 0.5 or (frac == 0.5 and pi1 >= 0.5):
        n1 += 1
    return n - n1, n1


def estimate_population_params(
    X,
    y0,
    learner: BaseLearner | None = None,
    folds: int = 5,
    random_state: int | None = 0,
    target_effect: float = 0.0,
    effect: EffectDefinition | None = None,
    pi1: float = 0.5,
    gamma: float = 0.0,
) -> ParamsEstimate:
    """Estimate power-calculation inputs from historical control-arm data.

    Recipe: sigma-hat is the sample SD of y0 (shared across arms);
    kappa-hat is the cross-validated RMSE of ``learner`` predicting y0
    from X (shared across arms, clamped at sigma-hat); gamma defaults to
    0 unless overridden; mu1 is solved so the chosen effect of
    (mu0, mu1) equals ``target_effect``.

    Requires n >= 10 * folds so the nested model selection inside the
    default ensemble has enough rows per split.
    """
    from .core import DIFFERENCE_IN_MEANS  # default here, not at import time

    if effect is None:
        effect = DIFFERENCE_IN_MEANS
    X = check_matrix(X, "X")
    y0 = check_vector(y0, n=X.shape[0], name="y0")
    folds = check_positive_int(folds, "folds", minimum=2)
    pi1 = check_probability(pi1, "pi1")
    gamma = float(gamma)
    if not -1.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [-1, 1]; got {gamma}")
    n = X.shape[0]
    if n < 10 * folds:
        raise ValidationError(
            f"historical data needs at least 10*folds = {10 * folds} rows "
            f"for stable cross-validation; got {n}")
    rng = check_random_state(random_state)
    if learner is None:
        learner = SelectingEnsembleRegressor()

    sigma = float(np.std(y0, ddof=1))
    if sigma == 0.0:
        raise DataError("historical outcomes are constant (sd = 0); "
                        "cannot estimate outcome variability from degenerate data")

    rmse_raw = cross_val_rmse(learner, X, y0, folds=folds, random_state=rng)
    warnings: list[str] = []
    kappa = rmse_raw
    if kappa > sigma:
        warnings.append(
            f"cv_rmse {rmse_raw:.6g} exceeds marginal sd {sigma:.6g}; "
            "clamped kappa to sigma (covariates treated as uninformative)")
        kappa = sigma

    mu0 = float(np.mean(y0))
    mu1 = effect.invert_mu1(mu0, float(target_effect))

    params = PopulationParams(
        mu0=mu0, mu1=mu1, sigma0=sigma, sigma1=sigma,
        kappa0=kappa, kappa1=kappa, gamma=gamma, pi0=1.0 - pi1, pi1=pi1)
    assumptions = [
        "sigma1 = sigma0: treatment-arm SD set to the historical control-arm SD",
        "kappa1 = kappa0: treatment-arm conditional SD set to the historical CV RMSE",
        ("gamma = 0: no correlation credit between arm conditional means"
         if gamma == 0.0 else
         f"gamma = {gamma:g}: user-supplied override of the default 0"),
        f"mu1 = {mu1:.6g}: solved so {effect.kind}(mu0, mu1) = {float(target_effect):g}",
    ]
    return ParamsEstimate(params=params, assumptions=assumptions, warnings=warnings,
                          cv_rmse_raw=float(rmse_raw), n_rows=n)


def plan_trial(
    params: PopulationParams,
    effect: EffectDefinition | None = None,
    alpha: float = 0.05,
    target_power: float = 0.8,
    max_n: int = 10_000_000,
    extra_assumptions: list[str] | None = None,
) -> DesignReport:
    """Compute required sample sizes for the adjusted and unadjusted analyses.

    Raises :class:`InfeasibleDesignError` when the adjusted variance
    degenerates to zero (perfectly predictable outcomes leave nothing for
    a trial to estimate; supply kappa > 0) or when ``max_n`` subjects
    cannot reach the target power.
    """
    from .core import DIFFERENCE_IN_MEANS

    if effect is None:
        effect = DIFFERENCE_IN_MEANS
    inputs = DesignInputs(effect=effect, params=params, alpha=alpha,
                          target_power=target_power)
    nu_sq_aipw = efficient_variance(effect, params)
    nu_sq_unadj = unadjusted_variance(effect, params)
    if nu_sq_aipw <= 0.0:
        raise InfeasibleDesignError(
            "adjusted asymptotic variance is 0: outcomes are perfectly "
            "predictable from covariates under these parameters; a trial "
            "needs kappa > 0")
    n_aipw = required_sample_size(inputs, nu=math.sqrt(nu_sq_aipw), max_n=max_n)
    n_unadj = required_sample_size(inputs, nu=math.sqrt(nu_sq_unadj), max_n=max_n)

    tau = effect.value(params.mu0, params.mu1)
    assumptions = [
        f"alpha = {inputs.alpha:g} (two-sided)",
        f"target power = {inputs.target_power:g}",
        f"target effect {effect.kind} = {tau:g}",
        "variances evaluated at the supplied population parameters",
    ]
    if extra_assumptions:
        assumptions = list(extra_assumptions) + assumptions
    return DesignReport(
        params=params,
        effect_kind=effect.kind,
        target_effect=float(tau),
        alpha=inputs.alpha,
        target_power=inputs.target_power,
        nu_sq_aipw=float(nu_sq_aipw),
        nu_sq_unadj=float(nu_sq_unadj),
        n_aipw=n_aipw,
        n_unadj=n_unadj,
        allocation_aipw=split_allocation(n_aipw, params.pi1),
        allocation_unadj=split_allocation(n_unadj, params.pi1),
        assumptions=assumptions,
    )
