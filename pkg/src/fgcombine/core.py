"""Core panel and matrix types shared by the precision estimators.

Forecast errors live in an immutable T x p panel (one column per competing
model).  Covariance and precision matrices are wrapped in :class:`SymMatrix`,
which records the role of the matrix and whether positive definiteness has
been verified.  Graph sparsity diagnostics (vertex degrees, edge counts)
operate on any symmetric matrix.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

__all__ = [
    "InvalidInputError",
    "DegenerateProblemError",
    "NumericError",
    "ErrorPanel",
    "SymMatrix",
    "CombinationWeights",
    "GraphDiagnostics",
    "sample_covariance",
    "graph_diagnostics",
]

SYMMETRY_RTOL = 1e-12
WEIGHT_SUM_TOL = 1e-12


class InvalidInputError(ValueError):
    """An input violates a documented precondition (shape, finiteness, range)."""


class DegenerateProblemError(ValueError):
    """The problem instance is degenerate (zero variance, zero diagonal, ...)."""


class NumericError(RuntimeError):
    """A numerical operation failed (factorization breakdown, lost definiteness)."""


MatrixRole = Literal["covariance", "precision"]
PdStatus = Literal["verified_pd", "unverified"]


def _frozen(values, dtype=float) -> np.ndarray:
    """Copy to a read-only float array so the containers stay immutable."""
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ErrorPanel:
    """T x p matrix of forecast errors (realized minus forecast).

    Parameters
    ----------
    values : ndarray, shape (T, p)
        One row per period, one column per forecasting model. T >= 2, p >= 2,
        all entries finite.
    t_index : sequence, optional
        Time labels, length T. Defaults to ``0..T-1``.
    model_ids : sequence of str, optional
        Stable column labels, length p. Defaults to ``m000, m001, ...``.
    """

    values: np.ndarray
    t_index: tuple = None
    model_ids: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidInputError(f"panel values must be 2-d, got ndim={values.ndim}")
        T, p = values.shape
        if T < 2 or p < 2:
            raise InvalidInputError(f"panel needs T >= 2 and p >= 2, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise InvalidInputError("panel contains non-finite entries")
        object.__setattr__(self, "values", _frozen(values))
        t_index = tuple(range(T)) if self.t_index is None else tuple(self.t_index)
        model_ids = (
            tuple(f"m{j:03d}" for j in range(p))
            if self.model_ids is None
            else tuple(str(m) for m in self.model_ids)
        )
        if len(t_index) != T:
            raise InvalidInputError(f"t_index has length {len(t_index)}, expected {T}")
        if len(model_ids) != p:
            raise InvalidInputError(f"model_ids has length {len(model_ids)}, expected {p}")
        object.__setattr__(self, "t_index", t_index)
        object.__setattr__(self, "model_ids", model_ids)

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_models(self) -> int:
        return self.values.shape[1]

    def demeaned(self) -> "ErrorPanel":
        """Panel with column means removed."""
        centred = self.values - self.values.mean(axis=0, keepdims=True)
        return ErrorPanel(centred, t_index=self.t_index, model_ids=self.model_ids)


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric p x p matrix with a role tag and positive-definiteness status.

    Symmetry is enforced at construction to within 1e-12 relative to the
    largest absolute entry. ``pd_status`` is only ``"verified_pd"`` when an
    eigenvalue check (or a structural guarantee of the producing algorithm)
    has established a strictly positive spectrum.
    """

    data: np.ndarray
    role: MatrixRole
    pd_status: PdStatus = "unverified"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise InvalidInputError(f"matrix must be square, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise InvalidInputError("matrix contains non-finite entries")
        scale = np.abs(data).max() if data.size else 0.0
        if not np.allclose(data, data.T, rtol=0.0, atol=SYMMETRY_RTOL * max(scale, 1e-300)):
            raise InvalidInputError("matrix is not symmetric within tolerance")
        if self.role not in ("covariance", "precision"):
            raise InvalidInputError(f"unknown matrix role {self.role!r}")
        if self.pd_status not in ("verified_pd", "unverified"):
            raise InvalidInputError(f"unknown pd_status {self.pd_status!r}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def p(self) -> int:
        return self.data.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.data)[0])

    def verified(self) -> "SymMatrix":
        """Return a copy with ``pd_status="verified_pd"`` after an eigenvalue check."""
        if self.pd_status == "verified_pd":
            return self
        if self.min_eigenvalue() <= 0.0:
            raise NumericError("matrix is not positive definite")
        return dataclasses.replace(self, pd_status="verified_pd")


@dataclass(frozen=True)
class CombinationWeights:
    """Combination weight vector plus the scalar a_hat = (1'Theta 1)/p.

    Weights must sum to one within 1e-12; negative entries are allowed.
    """

    w: np.ndarray
    a_hat: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise InvalidInputError("weights must be a 1-d vector")
        if not np.isfinite(w).all():
            raise InvalidInputError("weights contain non-finite entries")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInputError(f"weights sum to {w.sum():.15g}, expected 1")
        object.__setattr__(self, "w", _frozen(w))
        object.__setattr__(self, "a_hat", float(self.a_hat))

    @property
    def p(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class GraphDiagnostics:
    """Vertex degrees and edge count of the off-diagonal sparsity pattern.

    ``edge_count`` is the sum of vertex degrees, which counts each undirected
    edge twice (a fully dense p x p matrix has edge_count = p(p-1)).
    """

    degree_per_vertex: np.ndarray
    max_degree: int
    edge_count: int

    def __post_init__(self):
        object.__setattr__(self, "degree_per_vertex", _frozen(self.degree_per_vertex, dtype=int))
        object.__setattr__(self, "max_degree", int(self.max_degree))
        object.__setattr__(self, "edge_count", int(self.edge_count))


def sample_covariance(panel: ErrorPanel, demean: bool = False) -> SymMatrix:
    """Sample covariance S = (1/T) sum_t e_t e_t' of an error panel.

    Parameters
    ----------
    panel : ErrorPanel
    demean : bool
        When set, column means are removed first. The Monte Carlo DGPs are
        mean zero by construction and use ``demean=False``; the empirical
        pipeline demeans.

    Returns
    -------
    SymMatrix with role "covariance". Exactly symmetric by construction
    (upper triangle computed once and mirrored).
    """
    if not isinstance(panel, ErrorPanel):
        panel = ErrorPanel(panel)
    values = panel.values
    if demean:
        values = values - values.mean(axis=0, keepdims=True)
    T = values.shape[0]
    s = values.T @ values / T
    s = np.triu(s) + np.triu(s, 1).T
    return SymMatrix(s, role="covariance")


def graph_diagnostics(m, zero_tol: float = 1e-8) -> GraphDiagnostics:
    """Count edges (i, j), i != j with ``|m_ij| > zero_tol``.

    Scaling ``m`` by a positive constant leaves the result unchanged when
    ``zero_tol`` is scaled identically.
    """
    data = m.data if isinstance(m, SymMatrix) else np.asarray(m, dtype=float)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise InvalidInputError(f"matrix must be square, got shape {data.shape}")
    adj = np.abs(data) > zero_tol
    np.fill_diagonal(adj, False)
    degrees = adj.sum(axis=0)
    return GraphDiagnostics(
        degree_per_vertex=degrees,
        max_degree=int(degrees.max()) if degrees.size else 0,
        edge_count=int(degrees.sum()),
    )
