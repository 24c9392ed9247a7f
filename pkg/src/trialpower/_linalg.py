"""Least-squares plumbing shared by the linear learner and ANCOVA."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def solve_normal_equations(G: np.ndarray, c: np.ndarray,
                           n_covariates: int) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``G beta = c`` for a Gram matrix ``G = A'A``.

    The last ``n_covariates`` rows/columns of G correspond to covariate
    columns of A. Cholesky first; if the factorization fails, a ridge of
    ``1e-8 * trace(covariate block) / n_covariates`` is added to the
    covariate diagonal and the solve is retried, so well-posed systems are
    never perturbed. Returns (beta, G_used) where G_used is whichever
    matrix was actually factorized (the sandwich variance needs it).
    """
    try:
        return _chol_solve(G, c), G
    except np.linalg.LinAlgError:
        pass
    d = n_covariates
    p = G.shape[0]
    lam = 1e-8 * float(np.trace(G[p - d:, p - d:])) / d if d > 0 else 0.0
    G_r = G.copy()
    if d > 0:
        ii = np.arange(p - d, p)
        G_r[ii, ii] += lam
    try:
        return _chol_solve(G_r, c), G_r
    except np.linalg.LinAlgError as exc:
        raise ValidationError("design matrix is singular even after ridge fallback") from exc


def _chol_solve(G: np.ndarray, c: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(G)
    z = np.linalg.solve(L, c)
    return np.linalg.solve(L.T, z)
