"""PCA estimation of the approximate factor model of forecast errors.

Loadings are the top-q unit-norm eigenvectors of the sample second-moment
matrix (1/T) sum_t e_t e_t', factors are the projections f_t = B'e_t, and the
residuals e_t - B f_t carry everything the common component misses. The
factor count can be chosen by the IC1 information criterion

    IC1(q) = log(V(q)) + q * ((p+T)/(pT)) * log(pT/(p+T))

with V(q) the mean squared residual after removing q principal components.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .core import ErrorPanel, InvalidInputError, SymMatrix, sample_covariance

__all__ = ["FactorDecomposition", "estimate_factors", "select_num_factors"]

EIGEN_GAP_RTOL = 1e-9


@dataclass(frozen=True)
class FactorDecomposition:
    """Estimated loadings, factor series, residuals and their second moments.

    Loadings have orthonormal columns (B'B = I_q); residuals satisfy
    resid_t = e_t - B f_t exactly. ``q = 0`` is the degenerate decomposition
    used by the factor graphical models when no common component is removed.
    """

    loadings: np.ndarray
    factors: np.ndarray
    residuals: np.ndarray
    q: int
    sigma_f: Optional[SymMatrix]
    sigma_eps: SymMatrix

    @property
    def n_models(self) -> int:
        return self.loadings.shape[0]

    @property
    def n_periods(self) -> int:
        return self.residuals.shape[0]


def degenerate_decomposition(panel: ErrorPanel) -> FactorDecomposition:
    """q = 0: no factors, residuals equal the raw errors."""
    T, p = panel.values.shape
    return FactorDecomposition(
        loadings=np.zeros((p, 0)),
        factors=np.zeros((T, 0)),
        residuals=np.array(panel.values),
        q=0,
        sigma_f=None,
        sigma_eps=sample_covariance(panel, demean=False),
    )


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive.

    ``argmax`` breaks magnitude ties at the lowest index, which makes the
    output deterministic for a given input.
    """
    out = np.array(vectors)
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0:
            out[:, k] = -col
    return out


def _second_moment_spectrum(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors of (1/T) E'E.

    When p > T the nonzero spectrum is taken from the T x T Gram matrix
    (identical nonzero eigenvalues) and the p-dimensional eigenvectors are
    recovered as normalized E'u.
    """
    T, p = values.shape
    if p <= T:
        m = values.T @ values / T
        eigvals, eigvecs = np.linalg.eigh(m)
        order = np.argsort(eigvals)[::-1]
        return eigvals[order], eigvecs[:, order]
    g = values @ values.T / T
    eigvals, u = np.linalg.eigh(g)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    u = u[:, order]
    vecs = values.T @ u
    norms = np.linalg.norm(vecs, axis=0)
    norms[norms == 0.0] = 1.0
    return eigvals, vecs / norms


def estimate_factors(panel: Union[ErrorPanel, np.ndarray], q: int) -> FactorDecomposition:
    """Estimate a q-factor decomposition of the panel by PCA.

    Parameters
    ----------
    panel : ErrorPanel or (T, p) array
    q : int, 1 <= q < min(T, p)

    Returns
    -------
    FactorDecomposition with orthonormal loadings; the variance decomposition
    (1/T)||E||^2 = (1/T)||BF'||^2 + (1/T)||resid||^2 holds to roundoff.
    """
    if not isinstance(panel, ErrorPanel):
        panel = ErrorPanel(panel)
    values = panel.values
    T, p = values.shape
    if not isinstance(q, (int, np.integer)) or not 1 <= q < min(T, p):
        raise InvalidInputError(f"q must satisfy 1 <= q < min(T, p) = {min(T, p)}, got {q}")

    eigvals, eigvecs = _second_moment_spectrum(values)
    if q < min(T, p):
        gap = eigvals[q - 1] - eigvals[q]
        if gap <= EIGEN_GAP_RTOL * max(abs(eigvals[0]), 1e-300):
            warnings.warn(
                f"eigenvalues {q} and {q + 1} are numerically tied; "
                "the factor space is determined only up to rotation",
                RuntimeWarning,
            )
    loadings = _fix_signs(eigvecs[:, :q])
    factors = values @ loadings
    residuals = values - factors @ loadings.T

    sigma_f = factors.T @ factors / T
    sigma_f = np.triu(sigma_f) + np.triu(sigma_f, 1).T
    sigma_eps = residuals.T @ residuals / T
    sigma_eps = np.triu(sigma_eps) + np.triu(sigma_eps, 1).T
    return FactorDecomposition(
        loadings=loadings,
        factors=factors,
        residuals=residuals,
        q=int(q),
        sigma_f=SymMatrix(sigma_f, role="covariance"),
        sigma_eps=SymMatrix(sigma_eps, role="covariance"),
    )


def select_num_factors(panel: Union[ErrorPanel, np.ndarray], q_max: int) -> int:
    """Pick the factor count in 1..q_max minimizing the IC1 criterion."""
    if not isinstance(panel, ErrorPanel):
        panel = ErrorPanel(panel)
    values = panel.values
    T, p = values.shape
    if not isinstance(q_max, (int, np.integer)) or not 1 <= q_max < min(T, p):
        raise InvalidInputError(
            f"q_max must satisfy 1 <= q_max < min(T, p) = {min(T, p)}, got {q_max}"
        )
    eigvals, _ = _second_moment_spectrum(values)
    total = float(np.sum(values * values) / T)
    penalty = (p + T) / (p * T) * np.log(p * T / (p + T))
    best_q, best_ic = 1, np.inf
    removed = 0.0
    for q in range(1, q_max + 1):
        removed += eigvals[q - 1]
        v_q = max((total - removed) / p, 1e-300)
        ic = np.log(v_q) + q * penalty
        if ic < best_ic:
            best_q, best_ic = q, ic
    return best_q
