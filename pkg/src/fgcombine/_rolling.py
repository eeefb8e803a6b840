"""Shared rolling-window engine for the FAR model bank and per-origin combination.

One origin step: estimate predictor factors on the window, build the common
design for all (k, l) models, generate within-window recursive pseudo
out-of-sample errors (each model refit on expanding sub-windows, factors held
at the window estimates), fit every combination method's precision matrix on
that error panel, and combine the end-of-window forecasts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._kernels import far_recursion
from .combine import combine_forecasts, optimal_weights
from .core import ErrorPanel, InvalidInputError
from .factor import estimate_factors
from .fgm import fit_method

MIN_ERR_ROWS = 4
FIT_HEADROOM = 7  # extra fit rows beyond the design width before predicting

METHOD_ALIASES = {
    "ew": "EW",
    "equalweight": "EW",
    "glasso": "GLASSO",
    "mb": "MB",
    "nodewise": "MB",
    "factorglasso": "FactorGLASSO",
    "fgl": "FactorGLASSO",
    "factormb": "FactorMB",
    "fmb": "FactorMB",
}


def canonical_method(name: str) -> str:
    key = name.lower().replace("_", "").replace("-", "")
    if key not in METHOD_ALIASES:
        raise InvalidInputError(f"unknown method {name!r}")
    return METHOD_ALIASES[key]


def far_model_columns(K: int, L: int) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, int]]]:
    """Column subsets of the common design for every FAR(k, l) model.

    The design has 1 + K + L columns: intercept, K factors, L target lags.
    Models are ordered (k, l) with l fastest; (0, 0) is the intercept-only
    naive average.
    """
    labels = [(k, l) for k in range(K + 1) for l in range(L + 1)]
    D = 1 + K + L
    M = len(labels)
    cols = np.zeros((M, D), dtype=np.int64)
    ncols = np.zeros(M, dtype=np.int64)
    for m, (k, l) in enumerate(labels):
        idx = [0] + list(range(1, 1 + k)) + list(range(1 + K, 1 + K + l))
        cols[m, : len(idx)] = idx
        ncols[m] = len(idx)
    return cols, ncols, labels


def far_model_ids(K: int, L: int) -> List[str]:
    return [f"far_k{k}_l{l}" for k in range(K + 1) for l in range(L + 1)]


def build_design(
    g: np.ndarray, y: np.ndarray, h: int, K: int, L: int
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Design rows aligned so row i predicts targets[i] from h-lagged regressors.

    Returns (design, targets, t_first) where t_first is the window-time index
    of the first target row; design[i] = [1, g[t-h], y[t-h], ..., y[t-h-L+1]]
    for t = t_first + i.
    """
    n = y.shape[0]
    t_first = h + max(L - 1, 0)
    n_rows = n - t_first
    if n_rows <= 0:
        raise InvalidInputError("window too short for the lag structure")
    D = 1 + K + L
    design = np.empty((n_rows, D))
    design[:, 0] = 1.0
    for i, t in enumerate(range(t_first, n)):
        if K:
            design[i, 1 : 1 + K] = g[t - h]
        for l in range(1, L + 1):
            design[i, K + l] = y[t - h - l + 1]
    targets = y[t_first:]
    return design, targets, t_first


def end_of_window_regressors(g: np.ndarray, y: np.ndarray, K: int, L: int) -> np.ndarray:
    """Regressor vector at the window end, used for the t+h forecast."""
    n = y.shape[0]
    D = 1 + K + L
    z = np.empty(D)
    z[0] = 1.0
    if K:
        z[1 : 1 + K] = g[n - 1]
    for l in range(1, L + 1):
        z[K + l] = y[n - l]
    return z


def window_factors(x_win: np.ndarray, K: int, standardize: bool) -> np.ndarray:
    """Estimate K predictor factors on the window, optionally standardizing."""
    m = x_win.shape[0]
    if K == 0:
        return np.zeros((m, 0))
    x = np.asarray(x_win, dtype=float)
    if standardize:
        mu = x.mean(axis=0, keepdims=True)
        sd = x.std(axis=0, keepdims=True)
        sd[sd < 1e-12] = 1.0
        x = (x - mu) / sd
    dec = estimate_factors(x, K)
    return dec.factors


@dataclass
class OriginResult:
    """Combined and model-level forecasts produced at one origin."""

    model_forecasts: np.ndarray
    combined: Dict[str, float]
    weights: Dict[str, np.ndarray]
    q_hat: Dict[str, int]
    lam: Dict[str, float]
    n_err_rows: int
    failures: Dict[str, str] = field(default_factory=dict)
    n_rank_deficient: int = 0


def rolling_origin(
    x_win: np.ndarray,
    y_win: np.ndarray,
    h: int,
    K: int,
    L: int,
    methods: Sequence[str],
    q: Union[int, str] = "auto",
    grid_count: int = 30,
    eta: float = 1.0,
    demean_errors: bool = False,
    standardize_predictors: bool = False,
    min_err_rows: int = MIN_ERR_ROWS,
) -> OriginResult:
    """Run one full origin step on a window ending at the forecast origin.

    ``q`` applies to the factor methods' error decomposition ("auto" -> IC1).
    The predictor factor count is K (the largest FAR order).
    """
    from .tuning import PenaltyGrid

    methods = [canonical_method(m) for m in methods]
    m_rows = y_win.shape[0]
    g = window_factors(x_win, K, standardize_predictors)
    design, targets, _ = build_design(g, y_win, h, K, L)
    n_design = design.shape[0]
    D = design.shape[1]
    cols, ncols, _ = far_model_columns(K, L)
    M = cols.shape[0]

    first_pred = max(h + D + FIT_HEADROOM, n_design // 2)
    if n_design - first_pred < min_err_rows:
        raise InvalidInputError(
            f"window of {m_rows} leaves {n_design - first_pred} recursion errors; "
            f"need at least {min_err_rows} (shorten lags or lengthen the window)"
        )
    z_next = end_of_window_regressors(g, y_win, K, L)
    errors, yhat_next, n_deficient = far_recursion(
        np.ascontiguousarray(design),
        np.ascontiguousarray(targets),
        cols,
        ncols,
        h,
        first_pred,
        z_next,
    )

    result = OriginResult(
        model_forecasts=yhat_next,
        combined={},
        weights={},
        q_hat={},
        lam={},
        n_err_rows=errors.shape[0],
        n_rank_deficient=int(n_deficient),
    )

    if M == 1:
        for method in methods:
            result.combined[method] = float(yhat_next[0])
            result.weights[method] = np.ones(1)
        return result

    err_values = errors - errors.mean(axis=0, keepdims=True) if demean_errors else errors
    panel = ErrorPanel(err_values, model_ids=far_model_ids(K, L))

    for method in methods:
        try:
            fit = fit_precision_method(panel, method, q=q, grid_count=grid_count, eta=eta)
            w = optimal_weights(fit.theta)
            result.combined[method] = float(combine_forecasts(yhat_next, w))
            result.weights[method] = np.array(w.w)
            result.q_hat[method] = int(fit.tuning_report.get("q", 0))
            lam_val = fit.tuning_report.get("lam")
            if lam_val is None:
                lams = fit.tuning_report.get("lambdas")
                lam_val = float(np.mean(lams)) if lams is not None else float("nan")
            result.lam[method] = float(lam_val)
        except Exception as exc:  # recorded; aggregation decides how to handle
            result.failures[method] = f"{type(exc).__name__}: {exc}"
            result.combined[method] = float("nan")
            result.weights[method] = np.full(M, np.nan)
    return result


def fit_precision_method(
    panel: ErrorPanel,
    method: str,
    q: Union[int, str] = "auto",
    grid_count: int = 30,
    eta: float = 1.0,
):
    """Fit one canonical method with experiment-level tuning settings.

    A non-default ``grid_count`` thins the EBIC grid of the glasso variants
    (anchored on the raw error covariance so the top of the grid still
    diagonalizes the residual fit); the nodewise grids are per column and
    cheap, so they keep their defaults.
    """
    from .core import sample_covariance
    from .tuning import PenaltyGrid

    method = canonical_method(method)
    kwargs = {}
    if method in ("GLASSO", "FactorGLASSO"):
        kwargs["eta"] = eta
        if grid_count != 30:
            s = sample_covariance(panel, demean=False)
            kwargs["grid"] = PenaltyGrid.for_covariance(s, weighted=True, count=grid_count)
    return fit_method(panel, method, q=q, **kwargs)
