"""Monte-Carlo harness: counterfactual DGPs, trial replications, power grids.

The data-generating processes are two-arm quadratic-mean Gaussians on a
uniform covariate cube: x ~ U([-1,1]^d), S = sum_j x_j, and

    y_w = a_w S^2 + b_w S + c_w + Normal(0, noise_sd^2)

independently across rows and arms. Four named coefficient sets span the
linear/nonlinear x constant/heterogeneous effect combinations; their
population moments have closed forms (E S = 0, Var S = d/3,
E S^4 = d/5 + d(d-1)/3), so the exact asymptotic variances are available
as oracles alongside the Monte-Carlo estimates.

A replication samples counterfactual pairs, assigns treatment by a
Bernoulli(pi1) coin flip, reveals one outcome per subject, and runs a
configured estimator. :func:`empirical_rate` repeats that over seeded
replicates and reports the significant fraction; :func:`experiment_grid`
drives the full scenarios x estimators x sample-sizes cross product and
emits tidy rows plus a summary with prospective enrollment targets.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_positive_int, check_probability, check_random_state
from ._version import __version__
from .core import (
    DIFFERENCE_IN_MEANS,
    PopulationParams,
    efficient_variance,
    unadjusted_variance,
)
from .design import estimate_population_params, plan_trial
from .estimators import (
    AipwEstimator,
    AncovaEstimator,
    EstimateResult,
    OracleAipwEstimator,
    UnadjustedEstimator,
)
from .exceptions import DataError, ValidationError
from .learners import parse_learner

__all__ = [
    "ScenarioSpec",
    "CounterfactualSample",
    "PowerCurvePoint",
    "EstimatorConfig",
    "GridConfig",
    "table1_scenario",
    "scenario_names",
    "sample_counterfactual",
    "analytic_params",
    "true_params",
    "null_calibrated",
    "run_replication",
    "empirical_rate",
    "experiment_grid",
]


@dataclass(frozen=True)
class ScenarioSpec:
    """Two-arm quadratic-mean Gaussian DGP on the covariate cube [-1,1]^d."""

    a0: float
    b0: float
    c0: float
    a1: float
    b1: float
    c1: float
    d: int = 10
    noise_sd: float = 1.0
    name: str = ""

    def __post_init__(self):
        check_positive_int(self.d, "d")
        if not float(self.noise_sd) > 0.0:
            raise ValidationError(f"noise_sd must be positive, got {self.noise_sd}")

    def mu0(self, X: np.ndarray) -> np.ndarray:
        """Control-arm conditional mean evaluated row-wise."""
        S = np.asarray(X, dtype=np.float64).sum(axis=1)
        return self.a0 * S * S + self.b0 * S + self.c0

    def mu1(self, X: np.ndarray) -> np.ndarray:
        """Treatment-arm conditional mean evaluated row-wise."""
        S = np.asarray(X, dtype=np.float64).sum(axis=1)
        return self.a1 * S * S + self.b1 * S + self.c1

    def to_dict(self) -> dict:
        return {"a0": self.a0, "b0": self.b0, "c0": self.c0,
                "a1": self.a1, "b1": self.b1, "c1": self.c1,
                "d": self.d, "noise_sd": self.noise_sd, "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        allowed = {"a0", "b0", "c0", "a1", "b1", "c1", "d", "noise_sd", "name"}
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown scenario fields: {sorted(unknown)}")
        required = {"a0", "b0", "c0", "a1", "b1", "c1"}
        missing = required - set(d)
        if missing:
            raise ValidationError(f"scenario missing fields: {sorted(missing)}")
        return cls(**d)


_TABLE1 = {
    "linear-constant": (0.0, 1.0, 0.0, 0.0, 1.0, 0.5),
    "linear-heterogeneous": (0.0, 1.0, 0.0, 0.0, 0.0, 0.5),
    "nonlinear-constant": (1.0, 1.0, 0.0, 1.0, 1.0, 1.0),
    "nonlinear-heterogeneous": (1.0, 1.0, 0.0, 1.0, 0.0, 1.0),
}


def scenario_names() -> list[str]:
    """The four built-in scenario names, in canonical order."""
    return list(_TABLE1)


def _canonical_name(name: str) -> str:
    squashed = "".join(ch for ch in str(name).lower() if ch.isalnum())
    for key in _TABLE1:
        if squashed == key.replace("-", ""):
            return key
    raise ValidationError(
        f"unknown scenario {name!r}; choose from {', '.join(_TABLE1)}")


def table1_scenario(name: str) -> ScenarioSpec:
    """Look up a built-in scenario by name (case/punctuation-insensitive)."""
    key = _canonical_name(name)
    a0, b0, c0, a1, b1, c1 = _TABLE1[key]
    return ScenarioSpec(a0=a0, b0=b0, c0=c0, a1=a1, b1=b1, c1=c1, name=key)


@dataclass
class CounterfactualSample:
    """Covariates with both potential outcomes (pre-assignment)."""

    X: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    @property
    def n(self) -> int:
        return int(self.X.shape[0])


def sample_counterfactual(spec: ScenarioSpec, n: int,
                          random_state) -> CounterfactualSample:
    """Draw n iid rows of (x, y0, y1) from the scenario's DGP."""
    n = check_positive_int(n, "n")
    rng = check_random_state(random_state)
    X = rng.uniform(-1.0, 1.0, size=(n, spec.d))
    y0 = spec.mu0(X) + spec.noise_sd * rng.standard_normal(n)
    y1 = spec.mu1(X) + spec.noise_sd * rng.standard_normal(n)
    return CounterfactualSample(X=X, y0=y0, y1=y1)


def _moments(spec: ScenarioSpec) -> tuple[float, float]:
    """(Var S, Var S^2) for S = sum of d iid U(-1,1) draws.

    E x^2 = 1/3 and E x^4 = 1/5 give E S^2 = d/3 and
    E S^4 = d/5 + d(d-1)/3; odd moments vanish by symmetry.
    """
    d = spec.d
    var_s = d / 3.0
    es4 = d / 5.0 + d * (d - 1) / 3.0
    return var_s, es4 - var_s * var_s


def analytic_params(spec: ScenarioSpec, pi1: float = 0.5) -> tuple[PopulationParams, float]:
    """Exact population parameters of a quadratic-mean scenario.

    Uses the closed-form uniform-sum moments, so these are the oracle
    values that :func:`true_params` approaches as mc_reps grows. Returns
    (params, tau) where tau is the difference of arm means.
    """
    pi1 = check_probability(pi1, "pi1")
    var_s, var_s2 = _moments(spec)
    es2 = spec.d / 3.0
    means, variances = [], []
    for a, b, c in ((spec.a0, spec.b0, spec.c0), (spec.a1, spec.b1, spec.c1)):
        means.append(a * es2 + c)
        # Cov(S^2, S) = E S^3 = 0, so the cross term drops
        variances.append(a * a * var_s2 + b * b * var_s)
    cov = spec.a0 * spec.a1 * var_s2 + spec.b0 * spec.b1 * var_s
    if variances[0] > 0.0 and variances[1] > 0.0:
        gamma = cov / math.sqrt(variances[0] * variances[1])
    else:
        gamma = 0.0  # a constant conditional mean makes the correlation moot
    noise_var = spec.noise_sd ** 2
    params = PopulationParams(
        sigma0=math.sqrt(variances[0] + noise_var),
        sigma1=math.sqrt(variances[1] + noise_var),
        kappa0=spec.noise_sd, kappa1=spec.noise_sd,
        gamma=gamma, pi0=1.0 - pi1, pi1=pi1,
        mu0=means[0], mu1=means[1])
    return params, means[1] - means[0]


def true_params(spec: ScenarioSpec, mc_reps: int = 100_000, pi1: float = 0.5,
                random_state: int | None = 0) -> tuple[PopulationParams, float]:
    """Monte-Carlo population parameters over fresh covariate draws.

    kappa_w = noise_sd exactly (the conditional variance is known by
    construction); the conditional-mean moments are estimated from
    mc_reps draws. :func:`analytic_params` gives the exact limits.
    """
    mc_reps = check_positive_int(mc_reps, "mc_reps", minimum=100_000)
    pi1 = check_probability(pi1, "pi1")
    rng = check_random_state(random_state)
    X = rng.uniform(-1.0, 1.0, size=(mc_reps, spec.d))
    m0 = spec.mu0(X)
    m1 = spec.mu1(X)
    v0 = float(np.var(m0, ddof=1))
    v1 = float(np.var(m1, ddof=1))
    # sample correlation degenerates when either mean function is constant
    tol = 1e-12
    if v0 > tol and v1 > tol:
        gamma = float(np.corrcoef(m0, m1)[0, 1])
    else:
        gamma = 0.0
    noise_var = spec.noise_sd ** 2
    params = PopulationParams(
        sigma0=math.sqrt(v0 + noise_var), sigma1=math.sqrt(v1 + noise_var),
        kappa0=spec.noise_sd, kappa1=spec.noise_sd,
        gamma=max(-1.0, min(1.0, gamma)), pi0=1.0 - pi1, pi1=pi1,
        mu0=float(m0.mean()), mu1=float(m1.mean()))
    return params, float(m1.mean() - m0.mean())


def null_calibrated(spec: ScenarioSpec, mc_reps: int = 0,
                    random_state: int | None = 0) -> ScenarioSpec:
    """Shift c0 so the average treatment effect is exactly zero.

    For quadratic means the shift is closed-form: c0' = c1 + (a1-a0)*E[S^2]
    (the linear term contributes nothing since E S = 0). Idempotent.
    When ``mc_reps`` > 0, a Monte-Carlo draw double-checks the calibration
    and raises if the mean effect exceeds 4 standard errors.
    """
    es2 = spec.d / 3.0
    c0_new = spec.c1 + (spec.a1 - spec.a0) * es2
    out = replace(spec, c0=c0_new)
    if mc_reps > 0:
        sample = sample_counterfactual(out, int(mc_reps), random_state)
        diff = sample.y1 - sample.y0
        se = float(np.std(diff, ddof=1)) / math.sqrt(diff.shape[0])
        if abs(float(diff.mean())) > 4.0 * se:
            raise RuntimeError(
                f"null calibration check failed: mean effect {diff.mean():.4g} "
                f"exceeds 4 x MC se {se:.4g}")
    return out


_ESTIMATOR_KINDS = ("unadjusted", "ancova", "aipw", "oracle")


@dataclass(frozen=True)
class EstimatorConfig:
    """Which analysis to run in each replication.

    ``learner`` and ``n_folds`` only matter for kind="aipw". The label
    is what grid outputs report; it defaults to the kind, with the
    learner appended for AIPW (e.g. "aipw-ensemble").
    """

    kind: str
    learner: str = "ensemble"
    n_folds: int = 10
    label: str = ""

    def __post_init__(self):
        if self.kind not in _ESTIMATOR_KINDS:
            raise ValidationError(
                f"unknown estimator kind {self.kind!r}; "
                f"choose from {', '.join(_ESTIMATOR_KINDS)}")
        check_positive_int(self.n_folds, "n_folds", minimum=2)
        parse_learner(self.learner)  # fail fast on bad learner specs
        if not self.label:
            default = self.kind if self.kind != "aipw" else f"aipw-{self.learner}"
            object.__setattr__(self, "label", default)

    @classmethod
    def from_string(cls, text: str, n_folds: int = 10) -> "EstimatorConfig":
        """Parse CLI-style ids: unadj, ancova, oracle, aipw, aipw-<learner>."""
        t = str(text).strip().lower()
        if t in ("unadj", "unadjusted"):
            return cls(kind="unadjusted")
        if t == "ancova":
            return cls(kind="ancova")
        if t == "oracle":
            return cls(kind="oracle")
        if t == "aipw":
            return cls(kind="aipw", n_folds=n_folds)
        for sep in ("-", ":"):
            prefix = "aipw" + sep
            if t.startswith(prefix):
                return cls(kind="aipw", learner=t[len(prefix):], n_folds=n_folds)
        raise ValidationError(
            f"unknown estimator {text!r}; use unadj, ancova, aipw[-<learner>], or oracle")


@dataclass
class PowerCurvePoint:
    """Empirical significance rate at one (estimator, n) cell."""

    estimator: str
    n: int
    replications: int
    significant_count: int

    @property
    def empirical_rate(self) -> float:
        return self.significant_count / self.replications

    @property
    def mc_half_width(self) -> float:
        p = self.empirical_rate
        return 1.96 * math.sqrt(p * (1.0 - p) / self.replications)


def _build_estimator(spec: ScenarioSpec, config: EstimatorConfig, alpha: float,
                     pi1: float, fold_seed: int):
    if config.kind == "unadjusted":
        return UnadjustedEstimator(effect=DIFFERENCE_IN_MEANS, alpha=alpha)
    if config.kind == "ancova":
        return AncovaEstimator(effect=DIFFERENCE_IN_MEANS, alpha=alpha)
    if config.kind == "aipw":
        return AipwEstimator(learner=parse_learner(config.learner),
                             n_folds=config.n_folds, effect=DIFFERENCE_IN_MEANS,
                             alpha=alpha, pi1=pi1, random_state=fold_seed)
    return OracleAipwEstimator(mu0_fn=spec.mu0, mu1_fn=spec.mu1,
                               effect=DIFFERENCE_IN_MEANS, alpha=alpha, pi1=pi1)


def run_replication(spec: ScenarioSpec, n: int, pi1: float,
                    estimator_config: EstimatorConfig, alpha: float,
                    seed: int) -> tuple[EstimateResult, bool]:
    """One simulated trial: sample, assign, reveal, analyze.

    Treatment is an iid Bernoulli(pi1) coin flip per subject; an
    assignment that empties an arm is redrawn (at most 100 times, then
    :class:`DataError`). The redraw count is attached to the result as
    ``assignment_retries``. Deterministic given ``seed``.
    """
    n = check_positive_int(n, "n", minimum=4)
    pi1 = check_probability(pi1, "pi1")
    rng = np.random.default_rng(seed)
    sample = sample_counterfactual(spec, n, rng)
    w = (rng.random(n) < pi1).astype(np.float64)
    retries = 0
    while w.sum() in (0.0, float(n)):
        retries += 1
        if retries > 100:
            raise DataError(
                f"treatment assignment left an arm empty 100 times in a row "
                f"(n={n}, pi1={pi1})")
        w = (rng.random(n) < pi1).astype(np.float64)
    y = np.where(w == 1.0, sample.y1, sample.y0)
    fold_seed = int(rng.integers(0, 2 ** 63 - 1))
    estimator = _build_estimator(spec, estimator_config, alpha, pi1, fold_seed)
    result = estimator.fit(sample.X, w, y).result_
    result.assignment_retries = retries
    return result, result.significant


def _replicate_significant(args) -> bool:
    spec, n, pi1, config, alpha, seed = args
    _, significant = run_replication(spec, n, pi1, config, alpha, seed)
    return significant


def empirical_rate(spec: ScenarioSpec, n: int, estimator_config: EstimatorConfig,
                   alpha: float = 0.05, replications: int = 1000,
                   base_seed: int = 0, pi1: float = 0.5,
                   n_jobs: int = 1) -> PowerCurvePoint:
    """Fraction of significant results over seeded replications.

    Replicate i uses seed ``base_seed + i``, so results are identical
    whether replicates run serially or across ``n_jobs`` processes.
    """
    replications = check_positive_int(replications, "replications")
    n_jobs = check_positive_int(n_jobs, "n_jobs")
    arg_list = [(spec, n, pi1, estimator_config, alpha, base_seed + i)
                for i in range(replications)]
    count = 0
    if n_jobs == 1:
        for i, args in enumerate(arg_list):
            try:
                count += _replicate_significant(args)
            except Exception as exc:
                raise _with_replicate_context(exc, i, base_seed + i)
    else:
        chunk = max(1, replications // (4 * n_jobs))
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for i, flag in enumerate(pool.map(_replicate_significant, arg_list,
                                              chunksize=chunk)):
                count += flag
    return PowerCurvePoint(estimator=estimator_config.label, n=int(n),
                           replications=replications, significant_count=count)


def _with_replicate_context(exc: Exception, index: int, seed: int) -> Exception:
    message = f"replicate {index} (seed {seed}): {exc}"
    try:
        wrapped = type(exc)(message)
    except Exception:
        return exc
    wrapped.__cause__ = exc
    return wrapped


@dataclass
class GridConfig:
    """Everything :func:`experiment_grid` needs, with figure-style defaults.

    ``n_grid=None`` asks for an automatic geometric grid of
    ``n_grid_points`` sizes spanning [0.4, 1.4] x the prospective
    unadjusted enrollment target (effect mode only; null mode requires an
    explicit grid since there is no target to anchor to).
    """

    scenarios: list[str] = field(default_factory=scenario_names)
    estimators: list[EstimatorConfig] = field(default_factory=lambda: [
        EstimatorConfig(kind="unadjusted"),
        EstimatorConfig(kind="ancova"),
        EstimatorConfig(kind="aipw"),
        EstimatorConfig(kind="oracle"),
    ])
    n_grid: list[int] | None = None
    n_grid_points: int = 8
    replications: int = 1000
    alpha: float = 0.05
    pi1: float = 0.5
    base_seed: int = 0
    null_calibrate: bool = False
    historical_n: int = 10_000
    design_learner: str = "ensemble"
    design_folds: int = 5
    target_power: float = 0.8
    n_jobs: int = 1

    def resolved(self) -> dict:
        return {
            "scenarios": [_canonical_name(s) for s in self.scenarios],
            "estimators": [e.label for e in self.estimators],
            "n_grid": None if self.n_grid is None else [int(v) for v in self.n_grid],
            "n_grid_points": self.n_grid_points,
            "replications": self.replications,
            "alpha": self.alpha,
            "pi1": self.pi1,
            "base_seed": self.base_seed,
            "null_calibrate": self.null_calibrate,
            "historical_n": self.historical_n,
            "design_learner": self.design_learner,
            "design_folds": self.design_folds,
            "target_power": self.target_power,
            "n_jobs": self.n_jobs,
        }


def _auto_grid(n_anchor: int, points: int) -> list[int]:
    lo, hi = 0.4 * n_anchor, 1.4 * n_anchor
    values = np.geomspace(lo, hi, points)
    grid: list[int] = []
    for v in values:
        iv = max(4, int(round(v)))
        if not grid or iv > grid[-1]:
            grid.append(iv)
    return grid


def _scenario_targets(spec: ScenarioSpec, config: GridConfig,
                      scenario_index: int) -> dict:
    """Prospective and oracle enrollment targets for one scenario.

    The prospective pair (n_unadj, n_aipw) follows the real workflow: a
    fresh historical control sample of ``historical_n`` rows, parameter
    estimation with the design learner, then the sample-size solver. The
    oracle target uses the exact analytic parameters instead.
    """
    exact, tau = analytic_params(spec, pi1=config.pi1)
    rng = np.random.default_rng((config.base_seed, 7919, scenario_index))
    hist = sample_counterfactual(spec, config.historical_n, rng)
    estimate = estimate_population_params(
        hist.X, hist.y0, learner=parse_learner(config.design_learner),
        folds=config.design_folds, random_state=rng, target_effect=tau,
        effect=DIFFERENCE_IN_MEANS, pi1=config.pi1)
    prospective = plan_trial(estimate.params, effect=DIFFERENCE_IN_MEANS,
                             alpha=config.alpha, target_power=config.target_power,
                             extra_assumptions=estimate.assumptions)
    oracle = plan_trial(exact, effect=DIFFERENCE_IN_MEANS, alpha=config.alpha,
                        target_power=config.target_power)
    return {
        "tau": tau,
        "n_unadj": prospective.n_unadj,
        "n_aipw": prospective.n_aipw,
        "n_oracle": oracle.n_aipw,
        "nu_sq_unadj_hat": prospective.nu_sq_unadj,
        "nu_sq_aipw_hat": prospective.nu_sq_aipw,
        "nu_sq_oracle": oracle.nu_sq_aipw,
        "params_hat": estimate.params.to_dict(),
        "params_true": exact.to_dict(),
        "design_warnings": estimate.warnings,
    }


def experiment_grid(config: GridConfig) -> tuple[list[dict], dict]:
    """Run the scenarios x estimators x n-grid cross product.

    Returns (rows, summary): one tidy dict per cell with keys
    (scenario, estimator, learner, n, reps, rate, mc_half_width), and a
    summary carrying the resolved config plus per-scenario enrollment
    targets (effect mode only). Cell seeds are disjoint slices of the
    base-seed sequence, so results do not depend on evaluation order.
    """
    check_positive_int(config.replications, "replications")
    if config.n_grid is None and config.null_calibrate:
        raise ValidationError(
            "null mode has no enrollment target to anchor an automatic grid; "
            "pass an explicit n_grid")
    rows: list[dict] = []
    targets: dict[str, dict] = {}
    cell_index = 0
    for s_idx, raw_name in enumerate(config.scenarios):
        name = _canonical_name(raw_name)
        spec = table1_scenario(name)
        if config.null_calibrate:
            spec = null_calibrated(spec)
            grid = [int(v) for v in config.n_grid]
        else:
            targets[name] = _scenario_targets(spec, config, s_idx)
            grid = ([int(v) for v in config.n_grid] if config.n_grid is not None
                    else _auto_grid(targets[name]["n_unadj"], config.n_grid_points))
        for est in config.estimators:
            for n in grid:
                cell_seed = config.base_seed + cell_index * config.replications
                point = empirical_rate(
                    spec, n, est, alpha=config.alpha,
                    replications=config.replications, base_seed=cell_seed,
                    pi1=config.pi1, n_jobs=config.n_jobs)
                rows.append({
                    "scenario": name,
                    "estimator": est.label,
                    "learner": est.learner if est.kind == "aipw" else "",
                    "n": point.n,
                    "reps": point.replications,
                    "rate": point.empirical_rate,
                    "mc_half_width": point.mc_half_width,
                })
                cell_index += 1
    summary = {
        "schema_version": 1,
        "tool": {"name": "trialpower", "version": __version__},
        "config": config.resolved(),
        "targets": targets,
        "n_rows": len(rows),
    }
    return rows, summary
