"""Input-validation helpers used by every estimator-facing surface."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a C-contiguous float64 matrix of finite values.

    A zero-column matrix (n, 0) is legal: it means "no covariates" and
    downstream learners degrade to intercept-only behavior.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d array, got ndim={arr.ndim}")
    if arr.shape[0] < 1:
        raise ValidationError(f"{name} must have at least one row")
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_vector(y, n: int | None = None, name: str = "y") -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-d array, got ndim={arr.ndim}")
    if arr.shape[0] < 1:
        raise ValidationError(f"{name} must have at least one element")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    if n is not None and arr.shape[0] != n:
        raise ValidationError(f"{name} has length {arr.shape[0]}, expected {n}")
    return np.ascontiguousarray(arr)


def check_binary_vector(w, n: int | None = None, name: str = "w") -> np.ndarray:
    arr = check_vector(w, n=n, name=name)
    if not np.isin(arr, (0.0, 1.0)).all():
        raise ValidationError(f"{name} must contain only 0 and 1")
    return arr


def check_probability(p, name: str = "p") -> float:
    p = float(p)
    if not np.isfinite(p) or not 0.0 < p < 1.0:
        raise ValidationError(f"{name} must lie strictly in (0, 1), got {p}")
    return p


def check_positive_int(k, name: str = "k", minimum: int = 1) -> int:
    try:
        v = int(k)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be an integer, got {k!r}") from exc
    if v != k or v < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {k!r}")
    return v


def check_random_state(seed) -> np.random.Generator:
    """Turn an int seed (or an existing Generator) into a Generator.

    None is deliberately mapped to a fixed seed: every stochastic routine
    in this package is reproducible by default.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.default_rng(0)
    return np.random.default_rng(check_nonnegative_int(seed, "seed"))


def check_nonnegative_int(k, name: str = "k") -> int:
    return check_positive_int(k, name=name, minimum=0)
