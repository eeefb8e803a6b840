"""Nodewise-regression precision estimator with symmetrization and cleaning.

Each variable is lasso-regressed on the remaining p-1 columns:

    gamma_j = argmin ||e_j - E_{-j} g||^2 / T + 2 * lam_j * ||g||_1

The precision matrix is assembled as Theta = T^-2 C with C carrying a unit
diagonal and -gamma_j off the diagonal, and tau_j^2 the penalized residual
second moment. The raw Theta is not self-adjoint; when it is not symmetric
positive definite it is repaired by keeping the smaller-magnitude entry of
each off-diagonal pair and flooring the eigenvalues.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    DegenerateProblemError,
    ErrorPanel,
    InvalidInputError,
    SymMatrix,
)
from .lasso import LassoProblem, solve_lasso
from .tuning import PenaltyGrid, gic_path

__all__ = ["NodewiseFit", "nodewise_fit", "symmetrize_and_clean"]

DEFAULT_EIG_FLOOR_FRAC = 1e-6


@dataclass(frozen=True)
class NodewiseFit:
    """Assembled nodewise estimate.

    ``gamma_rows[j]`` holds the regression coefficients of column j on the
    others (in column order with j removed), ``tau_sq[j]`` the penalized
    residual second moment, ``lambdas[j]`` the penalty used. ``repaired``
    records whether symmetrization/eigenvalue cleaning was applied.
    """

    theta: SymMatrix
    gamma_rows: np.ndarray
    tau_sq: np.ndarray
    lambdas: np.ndarray
    repaired: bool
    gic_scores: Optional[list] = None


def symmetrize_and_clean(
    theta_raw: np.ndarray,
    eig_floor_frac: float = DEFAULT_EIG_FLOOR_FRAC,
) -> SymMatrix:
    """Repair an approximate precision matrix into a symmetric PD one.

    Symmetrization keeps, for every off-diagonal pair, the entry with the
    smaller absolute value (conservative toward sparsity). Eigenvalues below
    ``eig_floor_frac`` times the largest one are raised to that floor.
    A symmetric PD input is returned unchanged.
    """
    raw = np.asarray(theta_raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise InvalidInputError(f"matrix must be square, got shape {raw.shape}")
    if not np.isfinite(raw).all():
        raise InvalidInputError("matrix contains non-finite entries")
    scale = np.abs(raw).max()
    if scale == 0.0:
        raise DegenerateProblemError("cannot repair an all-zero matrix")

    if np.allclose(raw, raw.T, rtol=0.0, atol=1e-12 * scale):
        eigmin = np.linalg.eigvalsh(raw)[0]
        if eigmin > 0.0:
            return SymMatrix(raw, role="precision", pd_status="verified_pd")

    keep_here = np.abs(raw) <= np.abs(raw.T)
    chosen = np.where(keep_here, raw, raw.T)
    upper = np.triu(chosen, 1)
    sym = np.diag(np.diag(raw)) + upper + upper.T

    eigvals, eigvecs = np.linalg.eigh(sym)
    lam_max = eigvals[-1]
    if lam_max <= 0.0:
        raise DegenerateProblemError("matrix has no positive eigenvalue; cannot repair")
    floor = eig_floor_frac * lam_max
    cleaned = (eigvecs * np.maximum(eigvals, floor)) @ eigvecs.T
    cleaned = 0.5 * (cleaned + cleaned.T)
    return SymMatrix(cleaned, role="precision", pd_status="verified_pd")


def nodewise_fit(
    panel: Union[ErrorPanel, np.ndarray],
    lambdas: Union[str, Sequence[float], np.ndarray] = "auto",
    gic: bool = True,
    grid: Optional[PenaltyGrid] = None,
    eig_floor_frac: float = DEFAULT_EIG_FLOOR_FRAC,
    tol: float = 1e-7,
    max_iter: int = 10_000,
    lam_floor_c: float = 0.5,
    dfmax: Union[int, str, None] = "auto",
) -> NodewiseFit:
    """Estimate the precision matrix by p per-column lasso regressions.

    Parameters
    ----------
    panel : ErrorPanel or (T, p) array
    lambdas : "auto" or length-p vector
        Per-column penalties. With "auto", each lam_j is selected by GIC over
        ``grid`` (default: 30 log-spaced points below the column's own
        diagonalizing penalty); ``gic`` must then be set.
    eig_floor_frac : float
        Eigenvalue floor (relative to the largest) used when the raw
        assembled matrix needs repair.
    lam_floor_c : float
        Auto-selection guard: the default per-column grid is cut off below
        lam_floor_c * sqrt(yy_j * 2 log(p) / T), the scaled lasso rate. PCA
        residual panels are exactly rank deficient (residuals are orthogonal
        to the estimated loadings) and p can exceed T in rolling windows, so
        without a floor the GIC log(RSS) term chases interpolating fits.
        Set to 0 to disable. Ignored for explicitly supplied penalties.
    dfmax : int, "auto" or None
        Auto-selection guard: grid points activating more than dfmax
        coefficients are ineligible (glmnet's pmax). "auto" uses
        max(5, T // 3).

    Raises
    ------
    DegenerateProblemError on zero-variance columns (named).
    """
    if not isinstance(panel, ErrorPanel):
        panel = ErrorPanel(panel)
    values = panel.values
    T, p = values.shape

    spans = values.max(axis=0) - values.min(axis=0)
    dead = np.flatnonzero(spans == 0.0)
    if dead.size:
        names = ", ".join(panel.model_ids[j] for j in dead)
        raise DegenerateProblemError(f"zero-variance column(s): {names}")

    auto = isinstance(lambdas, str)
    if auto:
        if lambdas != "auto":
            raise InvalidInputError(f"unknown lambdas mode {lambdas!r}")
        if not gic:
            raise InvalidInputError("lambdas='auto' requires gic=True")
        if T < 3:
            raise InvalidInputError("GIC selection needs T >= 3")
    else:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.shape != (p,):
            raise InvalidInputError(f"lambdas must have length {p}")
        if (lambdas < 0).any():
            raise InvalidInputError("penalties must be >= 0")

    gram_full = values.T @ values / T
    gram_full = np.triu(gram_full) + np.triu(gram_full, 1).T

    if isinstance(dfmax, str):
        if dfmax != "auto":
            raise InvalidInputError(f"unknown dfmax mode {dfmax!r}")
        dfmax_val: Optional[int] = max(5, T // 3)
    else:
        dfmax_val = dfmax

    gamma_rows = np.empty((p, p - 1))
    tau_sq = np.empty(p)
    lam_used = np.empty(p)
    scores_all = [] if auto else None

    for j in range(p):
        keep = np.delete(np.arange(p), j)
        gram = gram_full[np.ix_(keep, keep)]
        linear = gram_full[keep, j]
        yy = gram_full[j, j]
        if auto:
            col_grid = grid
            if col_grid is None:
                lam_max = np.abs(linear).max()
                if lam_max <= 0:
                    lam_max = max(yy, 1.0) * 1e-3
                lam_floor = lam_floor_c * math.sqrt(max(yy, 0.0) * 2.0 * math.log(p) / T)
                if lam_floor >= lam_max:
                    col_grid = PenaltyGrid(values=np.array([lam_max]))
                else:
                    min_frac = max(0.01, lam_floor / lam_max)
                    col_grid = PenaltyGrid.from_lambda_max(lam_max, min_frac=min_frac)
            lam_j, scores, gamma, rss_t, _ = gic_path(
                gram, linear, yy, T, p, col_grid, tol=tol, max_iter=max_iter, dfmax=dfmax_val
            )
            scores_all.append(scores)
        else:
            lam_j = float(lambdas[j])
            gamma, converged = solve_lasso(
                LassoProblem(gram, linear, lam_j), tol=tol, max_iter=max_iter
            )
            if not converged:
                warnings.warn(f"nodewise lasso for column {j} did not converge", RuntimeWarning)
            rss_t = max(yy - 2.0 * gamma @ linear + gamma @ gram @ gamma, 0.0)
        gamma_rows[j] = gamma
        lam_used[j] = lam_j
        tau = rss_t + lam_j * np.abs(gamma).sum()
        if tau <= 0.0:
            raise DegenerateProblemError(
                f"column {panel.model_ids[j]}: zero residual second moment (tau^2 = {tau:g})"
            )
        tau_sq[j] = tau

    theta_raw = np.empty((p, p))
    for j in range(p):
        row = np.empty(p)
        row[j] = 1.0
        row[np.delete(np.arange(p), j)] = -gamma_rows[j]
        theta_raw[j] = row / tau_sq[j]

    scale = np.abs(theta_raw).max()
    symmetric = np.allclose(theta_raw, theta_raw.T, rtol=0.0, atol=1e-12 * max(scale, 1e-300))
    repaired = False
    if symmetric and np.linalg.eigvalsh(0.5 * (theta_raw + theta_raw.T))[0] > 0.0:
        theta = SymMatrix(theta_raw, role="precision", pd_status="verified_pd")
    else:
        theta = symmetrize_and_clean(theta_raw, eig_floor_frac=eig_floor_frac)
        repaired = True

    return NodewiseFit(
        theta=theta,
        gamma_rows=gamma_rows,
        tau_sq=tau_sq,
        lambdas=lam_used,
        repaired=repaired,
        gic_scores=scores_all,
    )
