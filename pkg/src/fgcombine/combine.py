"""Combination weights, MSFE evaluation and the equal-weight baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    CombinationWeights,
    DegenerateProblemError,
    InvalidInputError,
    SymMatrix,
)

__all__ = [
    "optimal_weights",
    "combine_forecasts",
    "msfe",
    "realized_msfe",
    "equal_weight_precision",
    "WeightErrorReport",
    "weight_error_report",
]


def _matrix(m) -> np.ndarray:
    return m.data if isinstance(m, SymMatrix) else np.asarray(m, dtype=float)


def optimal_weights(theta: Union[SymMatrix, np.ndarray]) -> CombinationWeights:
    """Minimum-variance combination weights w = Theta 1 / (1' Theta 1).

    Scale invariant in Theta; also records a_hat = (1' Theta 1)/p for the
    MSFE diagnostics. Raises when 1' Theta 1 <= 0 (a failed PD repair
    upstream).
    """
    th = _matrix(theta)
    p = th.shape[0]
    row_sums = th.sum(axis=1)
    total = row_sums.sum()
    if total <= 0.0:
        raise DegenerateProblemError(f"1'Theta 1 = {total:g} is not positive")
    w = row_sums / total
    # kill roundoff so the sum-to-one invariant holds exactly
    w = w / w.sum()
    return CombinationWeights(w=w, a_hat=total / p)


def combine_forecasts(forecasts: np.ndarray, w: Union[CombinationWeights, np.ndarray]) -> np.ndarray:
    """Per-period combined forecast, row-wise dot product with the weights."""
    f = np.asarray(forecasts, dtype=float)
    wv = w.w if isinstance(w, CombinationWeights) else np.asarray(w, dtype=float)
    if f.ndim == 1:
        f = f[None, :]
    if f.shape[1] != wv.shape[0]:
        raise InvalidInputError(
            f"forecast matrix has {f.shape[1]} columns but weights have length {wv.shape[0]}"
        )
    out = f @ wv
    return out[0] if out.shape == (1,) and np.asarray(forecasts).ndim == 1 else out


def msfe(w: Union[CombinationWeights, np.ndarray], sigma: Union[SymMatrix, np.ndarray]) -> float:
    """Population mean squared forecast error w' Sigma w."""
    wv = w.w if isinstance(w, CombinationWeights) else np.asarray(w, dtype=float)
    sg = _matrix(sigma)
    return float(wv @ sg @ wv)


def realized_msfe(y: np.ndarray, yhat: np.ndarray) -> float:
    """Average squared error (1/n) sum (y_t - yhat_t)^2 over the test window."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise InvalidInputError("realized and forecast series differ in length")
    if y.size == 0:
        raise InvalidInputError("empty evaluation window")
    return float(np.mean((y - yhat) ** 2))


def equal_weight_precision(s: Union[SymMatrix, np.ndarray]) -> SymMatrix:
    """Isotropic precision (1/mean eigenvalue) * I implying equal weights.

    The shrinkage intensity is the average eigenvalue of the sample
    covariance, i.e. trace(s)/p.
    """
    sv = _matrix(s)
    p = sv.shape[0]
    mean_eig = np.trace(sv) / p
    if mean_eig <= 0.0:
        raise DegenerateProblemError(f"trace(s) = {np.trace(sv):g} is not positive")
    return SymMatrix(np.eye(p) / mean_eig, role="precision", pd_status="verified_pd")


@dataclass(frozen=True)
class WeightErrorReport:
    """Diagnostics against a known truth (simulation use only).

    ``l1_weight_err`` is ||w_hat - w||_1; ``msfe_ratio_dev`` is |a - a_hat| /
    |a_hat|, which equals |MSFE(w_hat, Sigma_hat)/MSFE(w, Sigma) - 1|.
    ``msfe_at_estimated`` evaluates the estimated weights under the true
    covariance when one is supplied.
    """

    l1_weight_err: float
    msfe_ratio_dev: float
    msfe_at_estimated: Optional[float] = None


def weight_error_report(
    theta_hat: Union[SymMatrix, np.ndarray],
    theta_true: Union[SymMatrix, np.ndarray],
    sigma_true: Union[SymMatrix, np.ndarray, None] = None,
) -> WeightErrorReport:
    """Weight and MSFE-ratio errors of an estimated precision matrix."""
    w_hat = optimal_weights(theta_hat)
    w_true = optimal_weights(theta_true)
    l1 = float(np.abs(w_hat.w - w_true.w).sum())
    ratio = abs(w_true.a_hat - w_hat.a_hat) / abs(w_hat.a_hat)
    at_estimated = msfe(w_hat, sigma_true) if sigma_true is not None else None
    return WeightErrorReport(
        l1_weight_err=l1,
        msfe_ratio_dev=float(ratio),
        msfe_at_estimated=at_estimated,
    )
