"""Graphical lasso estimator of a sparse precision matrix.

The working covariance is initialized as W = S + lam*I with its diagonal held
fixed. Each block cycle partitions W and S around one column, solves the score
equation

    W11 * beta - s12 + lam * sign(beta) = 0

by cyclical coordinate descent, and writes W11 @ beta back into the off-
diagonal of W. On convergence the precision matrix is recovered column by
column from the partitioned-inverse identities 1/theta_jj = w_jj - beta'w12
and theta_12 = -theta_jj * beta, which keeps it positive definite.

The weighted variant multiplies the penalty on theta_ij by d_ii*d_jj with
D^2 = diag(W) taken once at initialization. It is solved by exact variable
scaling: run the unweighted algorithm on D^-1 S D^-1 (whose working
covariance has unit diagonal) and rescale the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from ._kernels import glasso_engine
from .core import InvalidInputError, NumericError, SymMatrix

__all__ = ["GlassoFit", "glasso_fit", "gaussian_loglik"]

DEFAULT_TOL = 1e-4
DEFAULT_MAX_CYCLES = 100
INNER_TOL = 1e-7
INNER_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class GlassoFit:
    """Result of one graphical-lasso fit.

    ``theta`` is the estimated precision matrix (positive definite by
    construction of the block algorithm), ``w`` the final working covariance
    with w @ theta ~= I on the diagonal up to solver tolerance.
    """

    theta: SymMatrix
    w: SymMatrix
    lam: float
    n_outer_cycles: int
    loglik: float
    converged: bool
    weighted: bool = False


def _as_cov_array(s) -> np.ndarray:
    if isinstance(s, SymMatrix):
        return np.array(s.data)
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidInputError(f"covariance must be square, got shape {s.shape}")
    if not np.isfinite(s).all():
        raise InvalidInputError("covariance contains non-finite entries")
    scale = np.abs(s).max() if s.size else 0.0
    if not np.allclose(s, s.T, rtol=0.0, atol=1e-12 * max(scale, 1e-300)):
        raise InvalidInputError("covariance is not symmetric")
    return np.array(s)


def gaussian_loglik(theta, w) -> float:
    """log det(Theta) - trace(W @ Theta) via a Cholesky factorization."""
    th = theta.data if isinstance(theta, SymMatrix) else np.asarray(theta, dtype=float)
    wv = w.data if isinstance(w, SymMatrix) else np.asarray(w, dtype=float)
    try:
        chol = scipy.linalg.cholesky(th, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError("precision matrix is not positive definite") from exc
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(logdet - np.sum(wv * th))


def glasso_fit(
    s,
    lam: float,
    weighted: bool = False,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
    inner_tol: float = INNER_TOL,
    inner_max_sweeps: int = INNER_MAX_SWEEPS,
    w_init: Optional[np.ndarray] = None,
    betas_init: Optional[np.ndarray] = None,
) -> GlassoFit:
    """Fit the (optionally weighted) graphical lasso at one penalty value.

    Parameters
    ----------
    s : SymMatrix or ndarray
        Symmetric covariance input. S + lam*I must be positive definite.
    lam : float
        Penalty, >= 0.
    weighted : bool
        Multiply the off-diagonal penalties by d_ii*d_jj, d_ii = sqrt(s_ii+lam).
    tol : float
        Outer convergence: mean absolute off-diagonal change of W per cycle,
        relative to mean(|s_offdiag|).
    w_init, betas_init : ndarray, optional
        Warm starts (in original units) for path fitting; the diagonal of
        ``w_init`` is reset to s_ii + lam.

    Returns
    -------
    GlassoFit; ``converged=False`` flags the best iterate after ``max_cycles``.
    """
    s = _as_cov_array(s)
    if lam < 0:
        raise InvalidInputError(f"penalty must be >= 0, got {lam}")
    p = s.shape[0]
    if p == 1:
        w = s + lam
        theta = 1.0 / w
        fit_w = SymMatrix(w, role="covariance")
        return GlassoFit(
            theta=SymMatrix(theta, role="precision", pd_status="verified_pd"),
            w=fit_w,
            lam=lam,
            n_outer_cycles=0,
            loglik=gaussian_loglik(theta, w),
            converged=True,
            weighted=weighted,
        )

    d = np.sqrt(np.diag(s) + lam)
    if weighted:
        if d.min() <= 0.0:
            raise InvalidInputError("weighted penalty needs s_ii + lam > 0 on the diagonal")
        scale = np.outer(d, d)
    else:
        scale = None

    if w_init is None:
        w = s + lam * np.eye(p)
    else:
        w = np.array(w_init, dtype=float)
        if w.shape != s.shape:
            raise InvalidInputError("w_init has the wrong shape")
        np.fill_diagonal(w, np.diag(s) + lam)
    if betas_init is None:
        betas = np.zeros((p, p - 1))
    else:
        betas = np.array(betas_init, dtype=float)
        if betas.shape != (p, p - 1):
            raise InvalidInputError("betas_init has the wrong shape")

    if weighted:
        s_eff = s / scale
        w_eff = w / scale
        # beta for column j lives in the coordinates i != j: scaled copy is d_i * beta_i
        betas_eff = np.empty_like(betas)
        for j in range(p):
            betas_eff[j] = betas[j] * np.delete(d, j)
    else:
        s_eff = s
        w_eff = w
        betas_eff = betas

    theta_eff, n_cycles, converged, ok = glasso_engine(
        np.ascontiguousarray(s_eff),
        float(lam),
        np.ascontiguousarray(w_eff),
        np.ascontiguousarray(betas_eff),
        tol,
        max_cycles,
        inner_tol,
        inner_max_sweeps,
    )
    if not ok:
        raise NumericError(
            "graphical lasso lost positive definiteness; is S + lam*I positive definite?"
        )

    if weighted:
        theta = theta_eff / scale
        w_out = w_eff * scale
    else:
        theta = theta_eff
        w_out = w_eff
    theta = 0.5 * (theta + theta.T)

    fit = GlassoFit(
        theta=SymMatrix(theta, role="precision", pd_status="verified_pd"),
        w=SymMatrix(0.5 * (w_out + w_out.T), role="covariance"),
        lam=float(lam),
        n_outer_cycles=int(n_cycles),
        loglik=gaussian_loglik(theta, w_out),
        converged=bool(converged),
        weighted=weighted,
    )
    return fit


def glasso_warm_state(fit: GlassoFit) -> Tuple[np.ndarray, np.ndarray]:
    """Extract (w, betas) from a fit for warm-starting the next penalty.

    The betas are reconstructed from theta (beta_j = -theta_12/theta_22),
    which is exact at the fit's own tolerance and keeps the state in original
    units regardless of the weighted flag.
    """
    theta = fit.theta.data
    p = theta.shape[0]
    betas = np.empty((p, p - 1))
    for j in range(p):
        col = np.delete(theta[:, j], j)
        betas[j] = -col / theta[j, j]
    return np.array(fit.w.data), betas
