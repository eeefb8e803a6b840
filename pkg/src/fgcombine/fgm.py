"""Factor graphical models: sparse idiosyncratic precision behind a factor layer.

Both estimators share three steps: (1) PCA factor decomposition of the error
panel, (2) a sparse precision estimate of the idiosyncratic residuals (the
weighted graphical lasso for factor_glasso, nodewise regressions for
factor_mb), and (3) recombination through the Sherman-Morrison-Woodbury
identity

    Theta = Theta_eps - Theta_eps B [Theta_f + B' Theta_eps B]^-1 B' Theta_eps

which inverts only a q x q matrix. With q = 0 both reduce exactly to their
plain graphical counterparts on the raw errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
import scipy.linalg

from .core import (
    DegenerateProblemError,
    ErrorPanel,
    InvalidInputError,
    NumericError,
    SymMatrix,
    sample_covariance,
)
from .factor import (
    FactorDecomposition,
    degenerate_decomposition,
    estimate_factors,
    select_num_factors,
)
from .glasso import glasso_fit
from .nodewise import nodewise_fit
from .tuning import PenaltyGrid, count_nonzero_upper, ebic_path, ebic_score, _min_score_index

__all__ = ["FgmFit", "smw_recombine", "factor_glasso", "factor_mb", "equal_weight_fit", "fit_method"]

MethodName = Literal["factor_glasso", "factor_mb", "glasso", "mb", "equal_weight"]

DEFAULT_Q_MAX = 8


@dataclass(frozen=True)
class FgmFit:
    """Precision estimate of the forecast errors plus its building blocks.

    ``theta`` is the p x p recombined precision; ``theta_eps`` the sparse
    idiosyncratic precision; ``theta_f`` the q x q factor precision (None when
    q = 0). ``tuning_report`` records selected penalties and criterion values.
    """

    theta: SymMatrix
    theta_eps: SymMatrix
    theta_f: Optional[SymMatrix]
    decomposition: FactorDecomposition
    method: MethodName
    tuning_report: dict


def smw_recombine(theta_eps: SymMatrix, theta_f: SymMatrix, loadings: np.ndarray) -> SymMatrix:
    """Recombine idiosyncratic and factor precisions through SMW.

    Equals the direct inverse of B Theta_f^-1 B' + Theta_eps^-1 while solving
    only the q x q inner system; the output is symmetrized to kill roundoff.
    """
    te = theta_eps.data if isinstance(theta_eps, SymMatrix) else np.asarray(theta_eps, float)
    tf = theta_f.data if isinstance(theta_f, SymMatrix) else np.asarray(theta_f, float)
    b = np.asarray(loadings, dtype=float)
    p = te.shape[0]
    q = tf.shape[0]
    if b.shape != (p, q):
        raise InvalidInputError(f"loadings must be {p} x {q}, got {b.shape}")
    if q == 0:
        return SymMatrix(np.array(te), role="precision", pd_status=getattr(theta_eps, "pd_status", "unverified"))
    teb = te @ b
    inner = tf + b.T @ teb
    inner = 0.5 * (inner + inner.T)
    try:
        cho = scipy.linalg.cho_factor(inner)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError("SMW inner matrix is not positive definite") from exc
    theta = te - teb @ scipy.linalg.cho_solve(cho, teb.T)
    theta = 0.5 * (theta + theta.T)
    out = SymMatrix(theta, role="precision")
    eigmin = out.min_eigenvalue()
    if eigmin > 0.0:
        out = SymMatrix(theta, role="precision", pd_status="verified_pd")
    return out


def _invert_factor_covariance(sigma_f: SymMatrix) -> SymMatrix:
    try:
        cho = scipy.linalg.cho_factor(sigma_f.data)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError("factor covariance is singular; reduce q") from exc
    theta_f = scipy.linalg.cho_solve(cho, np.eye(sigma_f.p))
    return SymMatrix(0.5 * (theta_f + theta_f.T), role="precision", pd_status="verified_pd")


def _resolve_q(panel: ErrorPanel, q, q_max: Optional[int]) -> int:
    if isinstance(q, str):
        if q != "auto":
            raise InvalidInputError(f"unknown q mode {q!r}")
        T, p = panel.values.shape
        upper = min(DEFAULT_Q_MAX, p - 1, T - 1) if q_max is None else q_max
        return select_num_factors(panel, upper)
    if not isinstance(q, (int, np.integer)) or q < 0:
        raise InvalidInputError(f"q must be a non-negative integer or 'auto', got {q!r}")
    return int(q)


def _decompose(panel: ErrorPanel, q: int) -> FactorDecomposition:
    if q == 0:
        return degenerate_decomposition(panel)
    return estimate_factors(panel, q)


def factor_glasso(
    panel: Union[ErrorPanel, np.ndarray],
    q: Union[int, str] = "auto",
    lam: Union[float, str] = "auto",
    eta: float = 1.0,
    grid: Optional[PenaltyGrid] = None,
    weighted: bool = True,
    tol: float = 1e-4,
    q_max: Optional[int] = None,
) -> FgmFit:
    """Factor graphical lasso (PCA factors + weighted glasso on residuals).

    ``q="auto"`` selects the factor count by IC1; ``lam="auto"`` selects the
    penalty by EBIC (eta defaults to 1) on the residual covariance. ``q=0``
    reduces exactly to the plain graphical lasso on the raw errors.
    """
    if not isinstance(panel, ErrorPanel):
        panel = ErrorPanel(panel)
    T = panel.n_periods
    q_used = _resolve_q(panel, q, q_max)
    decomp = _decompose(panel, q_used)
    s_eps = decomp.sigma_eps

    report = {"q": q_used}
    if isinstance(lam, str):
        if lam != "auto":
            raise InvalidInputError(f"unknown lam mode {lam!r}")
        use_grid = grid if grid is not None else PenaltyGrid.for_covariance(s_eps, weighted=weighted)
        scores, fits = ebic_path(s_eps, use_grid, eta, T, weighted=weighted, tol=tol)
        idx = _min_score_index(scores)
        fit = fits[idx]
        report.update(
            lam=float(use_grid.values[idx]),
            ebic_scores=scores,
            grid=np.array(use_grid.values),
        )
    else:
        fit = glasso_fit(s_eps, float(lam), weighted=weighted, tol=tol)
        report.update(lam=float(lam))
    report["glasso_converged"] = fit.converged

    theta_eps = fit.theta
    if q_used == 0:
        theta = theta_eps
        theta_f = None
    else:
        theta_f = _invert_factor_covariance(decomp.sigma_f)
        theta = smw_recombine(theta_eps, theta_f, decomp.loadings)
    return FgmFit(
        theta=theta,
        theta_eps=theta_eps,
        theta_f=theta_f,
        decomposition=decomp,
        method="factor_glasso" if q_used > 0 else "glasso",
        tuning_report=report,
    )


def factor_mb(
    panel: Union[ErrorPanel, np.ndarray],
    q: Union[int, str] = "auto",
    lambdas: Union[str, np.ndarray] = "auto",
    grid: Optional[PenaltyGrid] = None,
    eig_floor_frac: float = 1e-6,
    q_max: Optional[int] = None,
) -> FgmFit:
    """Factor nodewise regression (PCA factors + per-column GIC lasso).

    ``q=0`` reduces exactly to plain nodewise regression on the raw errors.
    """
    if not isinstance(panel, ErrorPanel):
        panel = ErrorPanel(panel)
    q_used = _resolve_q(panel, q, q_max)
    decomp = _decompose(panel, q_used)
    resid_panel = ErrorPanel(decomp.residuals, t_index=panel.t_index, model_ids=panel.model_ids)

    nw = nodewise_fit(resid_panel, lambdas=lambdas, gic=True, grid=grid, eig_floor_frac=eig_floor_frac)
    theta_eps = nw.theta
    report = {
        "q": q_used,
        "lambdas": np.array(nw.lambdas),
        "repaired": nw.repaired,
    }
    if q_used == 0:
        theta = theta_eps
        theta_f = None
    else:
        theta_f = _invert_factor_covariance(decomp.sigma_f)
        theta = smw_recombine(theta_eps, theta_f, decomp.loadings)
    return FgmFit(
        theta=theta,
        theta_eps=theta_eps,
        theta_f=theta_f,
        decomposition=decomp,
        method="factor_mb" if q_used > 0 else "mb",
        tuning_report=report,
    )


def equal_weight_fit(panel: Union[ErrorPanel, np.ndarray]) -> FgmFit:
    """Equal-weight baseline: isotropic precision from the mean eigenvalue."""
    from .combine import equal_weight_precision

    if not isinstance(panel, ErrorPanel):
        panel = ErrorPanel(panel)
    s = sample_covariance(panel, demean=False)
    theta = equal_weight_precision(s)
    return FgmFit(
        theta=theta,
        theta_eps=theta,
        theta_f=None,
        decomposition=degenerate_decomposition(panel),
        method="equal_weight",
        tuning_report={},
    )


def fit_method(
    panel: Union[ErrorPanel, np.ndarray],
    method: str,
    q: Union[int, str] = "auto",
    **kwargs,
) -> FgmFit:
    """Fit one of the five combination methods on an error panel.

    ``method`` is one of EW / GLASSO / MB / FactorGLASSO / FactorMB (case
    insensitive, underscores optional). Plain GLASSO and MB are the factor
    variants pinned at q = 0.
    """
    key = method.lower().replace("_", "").replace("-", "")
    if key == "ew" or key == "equalweight":
        return equal_weight_fit(panel)
    if key == "glasso":
        return factor_glasso(panel, q=0, **kwargs)
    if key == "mb" or key == "nodewise":
        return factor_mb(panel, q=0, **kwargs)
    if key == "factorglasso" or key == "fgl":
        return factor_glasso(panel, q=q, **kwargs)
    if key == "factormb" or key == "fmb":
        return factor_mb(panel, q=q, **kwargs)
    raise InvalidInputError(f"unknown method {method!r}")
