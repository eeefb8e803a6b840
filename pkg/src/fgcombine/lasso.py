"""Coordinate-descent solver for the l1-penalized quadratic programs.

Both graphical estimators reduce their column subproblems to

    min_b  0.5 * b'Gb - b'l + lam * ||b||_1

with G the relevant Gram/covariance block and l the cross-moment vector.
The solver visits coordinates cyclically and soft-thresholds each one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._kernels import cd_lasso
from .core import DegenerateProblemError, InvalidInputError

__all__ = ["LassoProblem", "solve_lasso", "lasso_objective"]

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class LassoProblem:
    """Quadratic-form lasso problem (gram, linear, penalty).

    ``gram`` must be symmetric PSD with strictly positive diagonal; for a
    regression of y on X both divided by T, gram = X'X/T and linear = X'y/T.
    """

    gram: np.ndarray
    linear: np.ndarray
    lam: float

    def __post_init__(self):
        gram = np.asarray(self.gram, dtype=float)
        linear = np.asarray(self.linear, dtype=float)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise InvalidInputError(f"gram must be square, got shape {gram.shape}")
        if linear.shape != (gram.shape[0],):
            raise InvalidInputError("linear term does not match gram dimension")
        if not (np.isfinite(gram).all() and np.isfinite(linear).all()):
            raise InvalidInputError("non-finite entries in lasso problem")
        if self.lam < 0:
            raise InvalidInputError(f"penalty must be >= 0, got {self.lam}")
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "lam", float(self.lam))


def lasso_objective(prob: LassoProblem, beta: np.ndarray) -> float:
    """0.5 * b'Gb - b'l + lam * ||b||_1 for diagnostics and tests."""
    return float(
        0.5 * beta @ prob.gram @ beta - beta @ prob.linear + prob.lam * np.abs(beta).sum()
    )


def solve_lasso(
    prob: LassoProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    beta0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, bool]:
    """Solve the penalized quadratic program by cyclical coordinate descent.

    Parameters
    ----------
    prob : LassoProblem
    tol : float
        Convergence threshold on the largest coordinate change per sweep.
    max_iter : int
        Maximum number of full sweeps.
    beta0 : ndarray, optional
        Warm start; zeros when omitted.

    Returns
    -------
    (beta, converged) : the solution vector and whether the sweep-change
    criterion was met before ``max_iter``. Never raises on slow convergence.
    """
    diag = np.diag(prob.gram)
    if diag.size and diag.min() <= 0.0:
        j = int(np.argmin(diag))
        raise DegenerateProblemError(
            f"gram diagonal must be strictly positive (entry {j} is {diag[j]:g})"
        )
    if beta0 is None:
        beta = np.zeros(prob.gram.shape[0])
    else:
        beta = np.array(beta0, dtype=float)
        if beta.shape != prob.linear.shape:
            raise InvalidInputError("warm start has the wrong dimension")
    if beta.size == 0:
        return beta, True
    _, converged = cd_lasso(
        np.ascontiguousarray(prob.gram),
        np.ascontiguousarray(prob.linear),
        prob.lam,
        beta,
        tol,
        max_iter,
    )
    return beta, bool(converged)
