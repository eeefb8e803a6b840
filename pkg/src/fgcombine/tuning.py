"""Penalty selection: EBIC for the graphical lasso, GIC for nodewise lasso.

EBIC score for a fitted precision matrix Theta at penalty lam:

    -2 * l(Theta) + log(T) * df + 4 * df * log(p) * eta

with l(Theta) = log det(Theta) - trace(W Theta) and df the number of unique
nonzero entries on the upper triangle including the diagonal. eta = 1 keeps
the selection consistent when p grows polynomially with T.

GIC score for one nodewise regression with active set S(lam):

    log(RSS / T) + |S(lam)| * (log(p) / T) * log(log(T))

where p is the full panel width (not the p-1 regressors).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import InvalidInputError, SymMatrix
from .glasso import GlassoFit, gaussian_loglik, glasso_fit, glasso_warm_state
from .lasso import LassoProblem, solve_lasso

__all__ = [
    "PenaltyGrid",
    "ebic_score",
    "count_nonzero_upper",
    "ebic_select",
    "gic_select",
]

DEFAULT_GRID_COUNT = 30
DEFAULT_MIN_FRAC = 0.01
NONZERO_TOL = 1e-8


@dataclass(frozen=True)
class PenaltyGrid:
    """Strictly decreasing grid of positive penalty values."""

    values: np.ndarray
    count: int = DEFAULT_GRID_COUNT
    max_frac: float = 1.0
    min_frac: float = DEFAULT_MIN_FRAC

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InvalidInputError("penalty grid must be a non-empty 1-d sequence")
        if values.min() <= 0:
            raise InvalidInputError("penalty grid values must be positive")
        if values.size > 1 and not (np.diff(values) < 0).all():
            raise InvalidInputError("penalty grid must be strictly decreasing")
        arr = np.array(values)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_lambda_max(
        cls,
        lam_max: float,
        count: int = DEFAULT_GRID_COUNT,
        max_frac: float = 1.0,
        min_frac: float = DEFAULT_MIN_FRAC,
    ) -> "PenaltyGrid":
        """Log-spaced grid from max_frac*lam_max down to min_frac*lam_max."""
        if lam_max <= 0:
            raise InvalidInputError(f"lam_max must be positive, got {lam_max}")
        if not 0 < min_frac < max_frac:
            raise InvalidInputError("need 0 < min_frac < max_frac")
        values = lam_max * np.geomspace(max_frac, min_frac, count)
        return cls(values=values, count=count, max_frac=max_frac, min_frac=min_frac)

    @classmethod
    def for_covariance(cls, s, weighted: bool = False, **kwargs) -> "PenaltyGrid":
        """Grid anchored at the smallest penalty making the fit diagonal.

        Unweighted, that is the largest absolute off-diagonal covariance;
        weighted, each entry is divided by sqrt(s_ii)*sqrt(s_jj) (conservative
        since the actual weights use s_ii + lam).
        """
        data = s.data if isinstance(s, SymMatrix) else np.asarray(s, dtype=float)
        off = np.abs(data - np.diag(np.diag(data)))
        if weighted:
            d = np.sqrt(np.clip(np.diag(data), 1e-300, None))
            off = off / np.outer(d, d)
        lam_max = off.max()
        if lam_max <= 0:
            # diagonal input: any positive grid selects the same (diagonal) fit
            lam_max = max(np.abs(np.diag(data)).max(), 1.0) * 1e-3
        return cls.from_lambda_max(lam_max, **kwargs)


def ebic_score(loglik: float, df: int, t_obs: int, p: int, eta: float) -> float:
    """-2*loglik + log(t_obs)*df + 4*df*log(p)*eta."""
    return -2.0 * loglik + np.log(t_obs) * df + 4.0 * df * np.log(p) * eta


def count_nonzero_upper(theta, tol: float = NONZERO_TOL) -> int:
    """Unique nonzero entries of the upper triangle, diagonal included."""
    data = theta.data if isinstance(theta, SymMatrix) else np.asarray(theta)
    iu = np.triu_indices(data.shape[0])
    return int((np.abs(data[iu]) > tol).sum())


def _min_score_index(scores: np.ndarray) -> int:
    """Index of the minimal finite score; ties go to the smallest penalty.

    Grids are stored in decreasing order, so among tied minima the last
    index wins.
    """
    finite = np.isfinite(scores)
    if not finite.any():
        raise InvalidInputError("no converged fit on the penalty grid")
    best = scores[finite].min()
    candidates = np.flatnonzero(finite & (scores == best))
    return int(candidates[-1])


def ebic_path(
    s,
    grid: PenaltyGrid,
    eta: float,
    t_obs: int,
    weighted: bool = False,
    tol: float = 1e-4,
    warm_start: bool = True,
) -> Tuple[np.ndarray, list]:
    """Fit the glasso along the grid and score each fit; returns (scores, fits).

    Non-converged fits get a nan score and a warning; they are never selected.
    """
    data = s.data if isinstance(s, SymMatrix) else np.asarray(s, dtype=float)
    p = data.shape[0]
    scores = np.full(len(grid), np.nan)
    fits = []
    w_prev = betas_prev = None
    eye = np.eye(p)
    for i, lam in enumerate(grid.values):
        fit = glasso_fit(
            data, float(lam), weighted=weighted, tol=tol,
            w_init=w_prev, betas_init=betas_prev,
        )
        fits.append(fit)
        if fit.converged:
            df = count_nonzero_upper(fit.theta)
            # sample-scaled Gaussian likelihood against the data covariance:
            # (T/2)(logdet - trace). Scoring the per-observation likelihood
            # instead would let the log(T)*df term force the empty graph at
            # any sample size, and scoring against the fitted W is vacuous
            # (its trace term is ~p by construction).
            loglik = 0.5 * t_obs * gaussian_loglik(fit.theta.data, data)
            scores[i] = ebic_score(loglik, df, t_obs, p, eta)
            if warm_start:
                w_prev, betas_prev = glasso_warm_state(fit)
        else:
            warnings.warn(
                f"glasso did not converge at lam={lam:g}; excluded from EBIC selection",
                RuntimeWarning,
            )
    return scores, fits


def ebic_select(
    s,
    grid: Optional[PenaltyGrid] = None,
    eta: float = 1.0,
    t_obs: int = None,
    weighted: bool = False,
    tol: float = 1e-4,
    warm_start: bool = True,
) -> Tuple[float, np.ndarray]:
    """Select the glasso penalty minimizing the EBIC score over the grid.

    Parameters
    ----------
    s : SymMatrix or ndarray
        Covariance the fits are run on.
    grid : PenaltyGrid, optional
        Defaults to 30 log-spaced points from the diagonalizing penalty down
        to 1% of it.
    eta : float in [0, 1]
        EBIC consistency weight; eta=0 recovers plain BIC ordering.
    t_obs : int
        Number of observations behind ``s`` (the estimation-window length in
        rolling applications).

    Returns
    -------
    (lambda_star, scores)
    """
    if t_obs is None or t_obs < 2:
        raise InvalidInputError("t_obs (observations behind s) must be >= 2")
    if not 0.0 <= eta <= 1.0:
        raise InvalidInputError(f"eta must lie in [0, 1], got {eta}")
    if grid is None:
        grid = PenaltyGrid.for_covariance(s, weighted=weighted)
    scores, _ = ebic_path(s, grid, eta, t_obs, weighted=weighted, tol=tol, warm_start=warm_start)
    idx = _min_score_index(scores)
    return float(grid.values[idx]), scores


def gic_path(
    gram: np.ndarray,
    linear: np.ndarray,
    yy: float,
    t_obs: int,
    p_width: int,
    grid: PenaltyGrid,
    tol: float = 1e-7,
    max_iter: int = 10_000,
    dfmax: Optional[int] = None,
):
    """GIC scores along a penalty grid from precomputed Gram quantities.

    RSS/T is evaluated through the identity yy - 2 b'l + b'Gb with
    yy = ||y||^2/T, which avoids touching the raw T x p arrays per grid point.
    ``dfmax`` makes grid points with more active coefficients ineligible
    (glmnet's pmax); they still get a score of nan.
    Returns (lambda_star, scores, beta_star, rss_t_star, nnz_star).
    """
    scores = np.full(len(grid), np.nan)
    betas = []
    rss_list = np.empty(len(grid))
    nnz_list = np.empty(len(grid), dtype=int)
    loglogT = np.log(np.log(t_obs))
    beta = np.zeros(gram.shape[0])
    for i, lam in enumerate(grid.values):
        prob = LassoProblem(gram, linear, float(lam))
        beta, converged = solve_lasso(prob, tol=tol, max_iter=max_iter, beta0=beta)
        rss_t = max(yy - 2.0 * beta @ linear + beta @ gram @ beta, 1e-300)
        nnz = int((beta != 0.0).sum())
        rss_list[i] = rss_t
        nnz_list[i] = nnz
        betas.append(beta.copy())
        if not converged:
            warnings.warn(
                f"lasso did not converge at lam={lam:g}; excluded from GIC selection",
                RuntimeWarning,
            )
            continue
        if dfmax is not None and nnz > dfmax:
            continue
        scores[i] = np.log(rss_t) + nnz * (np.log(p_width) / t_obs) * loglogT
    idx = _min_score_index(scores)
    return float(grid.values[idx]), scores, betas[idx], float(rss_list[idx]), int(nnz_list[idx])


def gic_select(
    response: np.ndarray,
    predictors: np.ndarray,
    grid: Optional[PenaltyGrid] = None,
) -> Tuple[float, np.ndarray]:
    """Select the lasso penalty for one nodewise regression by GIC.

    ``response`` is the T-vector being regressed on the T x (p-1) predictor
    block; the GIC model-size term uses the full panel width p.
    """
    y = np.asarray(response, dtype=float)
    X = np.asarray(predictors, dtype=float)
    if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInputError("response and predictors have incompatible shapes")
    T = y.shape[0]
    if T < 3:
        raise InvalidInputError("GIC needs T >= 3 for log(log(T)) > 0")
    p_width = X.shape[1] + 1
    gram = X.T @ X / T
    linear = X.T @ y / T
    yy = float(y @ y) / T
    if grid is None:
        lam_max = np.abs(linear).max()
        if lam_max <= 0:
            lam_max = max(yy, 1.0) * 1e-3
        grid = PenaltyGrid.from_lambda_max(lam_max)
    lam_star, scores, _, _, _ = gic_path(gram, linear, yy, T, p_width, grid)
    return lam_star, scores
