"""Monte Carlo generators and experiment drivers.

Two experiment families: the consistency exercise (random-graph idiosyncratic
precision behind an AR(1) factor layer, with p and q growing with T along a
kappa grid, T = [2^kappa]) and the out-of-sample MSFE exercise (a factor DGP
for the predictors, an MA common error in the target, and a bank of FAR(k, l)
models combined per method over a rolling window).

All generators are deterministic given (config, seed); replications use
independent child streams spawned from the master seed, so results do not
depend on execution order.
"""

from __future__ import annotations

import concurrent.futures
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from ._rolling import (
    build_design,
    canonical_method,
    end_of_window_regressors,
    far_model_columns,
    far_model_ids,
    rolling_origin,
)
from .combine import optimal_weights, realized_msfe, weight_error_report
from .core import ErrorPanel, InvalidInputError, SymMatrix
from ._rolling import fit_precision_method

__all__ = [
    "ConsistencyDgp",
    "ForecastDgp",
    "gen_random_graph_precision",
    "gen_error_panel",
    "gen_dense_factor_panel",
    "run_consistency_experiment",
    "ma_coefficients",
    "gen_forecast_data",
    "fit_far_models",
    "run_msfe_experiment",
    "results_to_csv",
]

AR_BURN_IN = 200
RESULT_COLUMNS = ["experiment", "method", "T_or_param", "replication", "metric", "value"]


def toeplitz_cholesky_upper(n: int, rho: float) -> np.ndarray:
    """Upper-triangular U with U'U equal to the Toeplitz matrix rho^|i-j|."""
    if n < 1:
        raise InvalidInputError("need n >= 1")
    top = scipy.linalg.toeplitz(rho ** np.abs(np.arange(n)))
    return scipy.linalg.cholesky(top, lower=False)


@dataclass(frozen=True)
class ConsistencyDgp:
    """Configuration of the consistency experiment (defaults are the paper's).

    p, q and the edge probability follow the sample size: p = floor(T^0.85),
    q = floor(2 sqrt(log T)), pi = 1/(p T^0.8); T = round(2^kappa).
    """

    rho: float = 0.2
    phi_f: float = 0.2
    sigma_zeta_sq: float = 1.0
    u: float = 0.1
    v: float = 0.3
    kappa_grid: Tuple[float, ...] = (7.0, 7.5, 8.0, 8.5, 9.0, 9.5)
    p_exponent: float = 0.85
    pi_t_exponent: float = 0.8
    # "toeplitz_cols": first q columns of the upper Toeplitz Cholesky factor
    #   (loadings confined to the leading q x q triangle, weak factors);
    # "toeplitz_rows": first q rows transposed (decaying dense columns);
    # "gaussian": iid N(0,1) entries, the pervasive-factor regime in which
    #   factor-based estimators dominate the plain graphical ones.
    loading_style: str = "toeplitz_cols"

    def t_for(self, kappa: float) -> int:
        return int(np.rint(2.0 ** kappa))

    def p_for(self, T: int) -> int:
        return int(math.floor(T ** self.p_exponent))

    def q_for(self, T: int) -> int:
        q = int(math.floor(2.0 * math.sqrt(math.log(T))))
        return max(1, q)

    def pi_for(self, T: int, p: int) -> float:
        return 1.0 / (p * T ** self.pi_t_exponent)


def gen_random_graph_precision(
    p: int, pi: float, u: float, v: float, rng: np.random.Generator
) -> SymMatrix:
    """Sparse precision from a random-graph adjacency, made PD by a shift.

    Theta = A*v + I*(|tau| + 0.1 + u) with tau the smallest eigenvalue of A*v,
    so the smallest eigenvalue of the output is at least 0.1 + u.
    """
    if not 0.0 <= pi <= 1.0:
        raise InvalidInputError(f"edge probability must lie in [0, 1], got {pi}")
    iu = np.triu_indices(p, 1)
    edges = rng.random(iu[0].size) < pi
    adj = np.zeros((p, p))
    adj[iu] = edges.astype(float)
    adj = adj + adj.T
    m = adj * v
    tau = float(np.linalg.eigvalsh(m)[0]) if p > 0 else 0.0
    theta = m + np.eye(p) * (abs(tau) + 0.1 + u)
    return SymMatrix(theta, role="precision", pd_status="verified_pd")


def _ar1_series(n: int, dim: int, phi, scale: float, rng: np.random.Generator, extra: int = 0):
    """AR(1) with burn-in; returns the last n + extra rows (extra pre-samples)."""
    phi_vec = np.full(dim, phi, dtype=float) if np.isscalar(phi) else np.asarray(phi, dtype=float)
    if phi_vec.shape != (dim,):
        raise InvalidInputError(f"phi must be scalar or length {dim}")
    total = AR_BURN_IN + extra + n
    innov = rng.normal(scale=scale, size=(total, dim))
    out = np.empty((total, dim))
    prev = np.zeros(dim)
    for t in range(total):
        prev = phi_vec * prev + innov[t]
        out[t] = prev
    return out[AR_BURN_IN:]


def gen_error_panel(
    dgp: ConsistencyDgp, T: int, rng: np.random.Generator
) -> Tuple[ErrorPanel, SymMatrix, SymMatrix, np.ndarray]:
    """Simulate a forecast-error panel with factor-plus-sparse structure.

    Returns (panel, theta_true, sigma_true, b_true). Loadings are the first q
    columns of the upper-triangular Cholesky factor of the p x p Toeplitz
    matrix; factors follow a scalar AR(1); idiosyncratic errors are Gaussian
    with the random-graph precision.
    """
    p = dgp.p_for(T)
    q = dgp.q_for(T)
    q = min(q, min(T, p) - 1)
    if dgp.loading_style == "toeplitz_cols":
        b_true = toeplitz_cholesky_upper(p, dgp.rho)[:, :q]
    elif dgp.loading_style == "toeplitz_rows":
        b_true = toeplitz_cholesky_upper(p, dgp.rho)[:q, :].T
    elif dgp.loading_style == "gaussian":
        b_true = rng.standard_normal(size=(p, q))
    else:
        raise InvalidInputError(f"unknown loading_style {dgp.loading_style!r}")

    theta_eps = gen_random_graph_precision(p, dgp.pi_for(T, p), dgp.u, dgp.v, rng)
    sigma_eps = np.linalg.inv(theta_eps.data)
    sigma_eps = 0.5 * (sigma_eps + sigma_eps.T)

    sigma_zeta = math.sqrt(dgp.sigma_zeta_sq)
    factors = _ar1_series(T, q, dgp.phi_f, sigma_zeta, rng)
    chol_eps = np.linalg.cholesky(sigma_eps)
    eps = rng.standard_normal(size=(T, p)) @ chol_eps.T
    errors = factors @ b_true.T + eps

    var_f = dgp.sigma_zeta_sq / (1.0 - dgp.phi_f ** 2)
    sigma = b_true @ (var_f * np.eye(q)) @ b_true.T + sigma_eps
    sigma = 0.5 * (sigma + sigma.T)
    theta = np.linalg.inv(sigma)
    theta = 0.5 * (theta + theta.T)
    return (
        ErrorPanel(errors),
        SymMatrix(theta, role="precision", pd_status="verified_pd"),
        SymMatrix(sigma, role="covariance", pd_status="verified_pd"),
        b_true,
    )


def gen_dense_factor_panel(
    T: int,
    p: int,
    q: int,
    rng: np.random.Generator,
    idio_ar: float = 0.4,
    factor_var: float = 0.1,
    loading_var: float = 0.01,
) -> dict:
    """Factor panel with AR(1)-Toeplitz idiosyncratic covariance (tridiagonal
    idiosyncratic precision), used for the partial-correlation illustrations.

    Factors are iid N(0, factor_var I_q), loadings iid N(0, loading_var).
    Returns a dict with the panel and the population quantities.
    """
    sigma_eps = scipy.linalg.toeplitz(idio_ar ** np.abs(np.arange(p)))
    b = rng.normal(scale=math.sqrt(loading_var), size=(p, q))
    f = rng.normal(scale=math.sqrt(factor_var), size=(T, q))
    chol = np.linalg.cholesky(sigma_eps)
    eps = rng.standard_normal(size=(T, p)) @ chol.T
    errors = f @ b.T + eps
    sigma = b @ (factor_var * np.eye(q)) @ b.T + sigma_eps
    theta = np.linalg.inv(sigma)
    theta_eps = np.linalg.inv(sigma_eps)
    return {
        "panel": ErrorPanel(errors),
        "b": b,
        "sigma_eps": SymMatrix(0.5 * (sigma_eps + sigma_eps.T), role="covariance"),
        "theta_eps": SymMatrix(0.5 * (theta_eps + theta_eps.T), role="precision"),
        "sigma": SymMatrix(0.5 * (sigma + sigma.T), role="covariance"),
        "theta": SymMatrix(0.5 * (theta + theta.T), role="precision"),
    }


def _operator_norms(delta: np.ndarray) -> Tuple[float, float]:
    """(spectral norm, l1/l1 operator norm) of a symmetric difference."""
    eigvals = np.linalg.eigvalsh(0.5 * (delta + delta.T))
    op2 = float(max(abs(eigvals[0]), abs(eigvals[-1])))
    l1 = float(np.abs(delta).sum(axis=0).max())
    return op2, l1


def _consistency_task(args) -> List[dict]:
    dgp, kappa, rep, methods, q_mode, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    T = dgp.t_for(kappa)
    panel, theta_true, sigma_true, _b = gen_error_panel(dgp, T, rng)
    q_fixed = dgp.q_for(T)
    rows: List[dict] = []
    for method in methods:
        base = {
            "experiment": "consistency",
            "method": method,
            "T_or_param": T,
            "replication": rep,
        }
        try:
            q_arg = "auto" if q_mode == "auto" else q_fixed
            fit = fit_precision_method(panel, method, q=q_arg)
            op2, l1op = _operator_norms(fit.theta.data - theta_true.data)
            wrep = weight_error_report(fit.theta, theta_true, sigma_true)
            rows += [
                dict(base, metric="op2_err", value=op2),
                dict(base, metric="l1op_err", value=l1op),
                dict(base, metric="weight_l1_err", value=wrep.l1_weight_err),
                dict(base, metric="msfe_ratio_dev", value=wrep.msfe_ratio_dev),
            ]
        except Exception as exc:
            warnings.warn(f"{method} failed at T={T} rep={rep}: {exc}", RuntimeWarning)
            rows.append(dict(base, metric="fit_failed", value=1.0))
    return rows


def run_consistency_experiment(
    dgp: ConsistencyDgp,
    methods: Sequence[str],
    n_rep: int,
    seed: int = 0,
    kappas: Optional[Sequence[float]] = None,
    q_mode: str = "dgp",
    n_jobs: int = 1,
) -> pd.DataFrame:
    """Estimation-error trends over the kappa grid, long format.

    Metrics per (method, T, replication): spectral and l1 operator norms of
    Theta_hat - Theta, the l1 weight error and the MSFE ratio deviation.
    Failed fits are recorded as ``fit_failed`` rows and excluded from means.
    """
    methods = [canonical_method(m) for m in methods]
    if q_mode not in ("dgp", "auto"):
        raise InvalidInputError("q_mode must be 'dgp' or 'auto'")
    kappas = tuple(dgp.kappa_grid if kappas is None else kappas)
    tasks = []
    children = np.random.SeedSequence(seed).spawn(len(kappas) * n_rep)
    i = 0
    for kappa in kappas:
        for rep in range(n_rep):
            tasks.append((dgp, kappa, rep, methods, q_mode, children[i]))
            i += 1
    rows = _run_tasks(_consistency_task, tasks, n_jobs)
    df = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    n_failed = int((df["metric"] == "fit_failed").sum())
    if n_failed:
        warnings.warn(f"{n_failed} fits failed and were excluded", RuntimeWarning)
    return df


@dataclass(frozen=True)
class ForecastDgp:
    """Configuration of the out-of-sample MSFE experiment.

    The target carries an MA common error with coefficients
    theta_s = (1+s)^c1 * c2^s; predictors load on r AR(1) factors through the
    first r rows (transposed) of the Toeplitz Cholesky factor. The FAR bank
    spans (k, l) in {0..K} x {0..L}, p = (1+K)(1+L) models. ``q_errors`` is
    the factor count the combination methods remove from the forecast errors
    ("auto" selects by IC1 per origin).
    """

    n_predictors: int = 100
    r: int = 5
    sigma_v: float = 1.0
    sigma_xi: float = 1.0
    sigma_eps: float = 1.0
    phi: Union[float, Tuple[float, ...]] = 0.8
    rho: float = 0.9
    c1: float = 0.0
    c2: float = 0.9
    K: int = 2
    L: int = 7
    q_errors: Union[int, str] = 5

    def __post_init__(self):
        if not 0.0 < self.c2 < 1.0:
            raise InvalidInputError(f"c2 must lie in (0, 1), got {self.c2}")
        if self.K < 0 or self.L < 0:
            raise InvalidInputError("K and L must be >= 0")

    @property
    def n_models(self) -> int:
        return (1 + self.K) * (1 + self.L)


def ma_coefficients(c1: float, c2: float, tol: float = 1e-10) -> np.ndarray:
    """MA coefficients theta_s = (1+s)^c1 * c2^s for s >= 1, truncated when
    they decay below ``tol`` (geometric decay guarantees termination)."""
    if not 0.0 < c2 < 1.0:
        raise InvalidInputError(f"c2 must lie in (0, 1), got {c2}")
    coefs = []
    s = 1
    while True:
        theta_s = (1.0 + s) ** c1 * c2 ** s
        if theta_s < tol:
            break
        coefs.append(theta_s)
        s += 1
    return np.asarray(coefs)


def gen_forecast_data(dgp: ForecastDgp, T: int, rng: np.random.Generator) -> dict:
    """Simulate predictors, target and true factors for the MSFE experiment.

    y[t] = alpha'g[t-1] + sum_s theta_s eps[t-s] + eps[t]; x[t] = Lambda g[t] + v[t].
    """
    N, r = dgp.n_predictors, dgp.r
    lam = toeplitz_cholesky_upper(N, dgp.rho)[:r, :].T  # N x r
    alpha = rng.normal(loc=1.0, scale=1.0, size=r)
    g_ext = _ar1_series(T, r, dgp.phi, dgp.sigma_xi, rng, extra=1)  # rows: t = -1..T-1
    g = g_ext[1:]

    coefs = np.concatenate(([1.0], ma_coefficients(dgp.c1, dgp.c2)))
    s_max = coefs.size - 1
    eps = rng.normal(scale=dgp.sigma_eps, size=T + s_max)
    ma = np.convolve(eps, coefs, mode="full")[s_max : s_max + T]

    v = rng.normal(scale=dgp.sigma_v, size=(T, N))
    x = g @ lam.T + v
    y = g_ext[:-1] @ alpha + ma
    return {"x": x, "y": y, "g_true": g, "alpha": alpha, "loadings": lam}


def fit_far_models(
    x: np.ndarray, y: np.ndarray, K: int, L: int, h: int = 1
) -> np.ndarray:
    """One-step (or h-step direct) forecasts from the (1+K)(1+L) FAR models.

    Factors are estimated from the predictor window by PCA; each (k, l) model
    is least-squares fit on the window; rank-deficient designs fall back to
    the pseudo-inverse solution with a warning. Returns the p forecasts in
    (k, l) order with l fastest.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError("predictor and target windows differ in length")
    from ._rolling import window_factors

    g = window_factors(x, K, standardize=False)
    design, targets, _ = build_design(g, y, h, K, L)
    z_next = end_of_window_regressors(g, y, K, L)
    cols, ncols, labels = far_model_columns(K, L)
    forecasts = np.empty(len(labels))
    n_deficient = 0
    for m, (k, l) in enumerate(labels):
        idx = cols[m, : ncols[m]]
        X = design[:, idx]
        coef, _res, rank, _sv = np.linalg.lstsq(X, targets, rcond=None)
        if rank < ncols[m]:
            n_deficient += 1
        forecasts[m] = z_next[idx] @ coef
    if n_deficient:
        warnings.warn(
            f"{n_deficient} FAR design(s) rank deficient; pseudo-inverse used",
            RuntimeWarning,
        )
    return forecasts


def _msfe_task(args) -> List[dict]:
    dgp, T, rep, methods, grid_count, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    data = gen_forecast_data(dgp, T, rng)
    x, y = data["x"], data["y"]
    m = T // 2
    h = 1
    origins = range(m - 1, T - h)
    preds: Dict[str, List[float]] = {meth: [] for meth in methods}
    realized: List[float] = []
    failures: Dict[str, int] = {meth: 0 for meth in methods}
    for t in origins:
        res = rolling_origin(
            x[t - m + 1 : t + 1],
            y[t - m + 1 : t + 1],
            h,
            dgp.K,
            dgp.L,
            methods,
            q=dgp.q_errors,
            grid_count=grid_count,
            demean_errors=False,
            standardize_predictors=False,
        )
        realized.append(y[t + h])
        for meth in methods:
            preds[meth].append(res.combined[meth])
            if meth in res.failures:
                failures[meth] += 1
    rows = []
    realized_arr = np.asarray(realized)
    for meth in methods:
        fc = np.asarray(preds[meth])
        ok = np.isfinite(fc)
        base = {
            "experiment": "msfe",
            "method": meth,
            "T_or_param": T,
            "replication": rep,
        }
        if ok.sum() == 0:
            rows.append(dict(base, metric="fit_failed", value=float(failures[meth])))
            continue
        rows.append(dict(base, metric="msfe", value=realized_msfe(realized_arr[ok], fc[ok])))
        if failures[meth]:
            rows.append(dict(base, metric="n_origin_failures", value=float(failures[meth])))
    return rows


def run_msfe_experiment(
    dgp: ForecastDgp,
    methods: Sequence[str],
    n_rep: int,
    T_values: Sequence[int],
    seed: int = 0,
    grid_count: int = 30,
    n_jobs: int = 1,
) -> pd.DataFrame:
    """Rolling-window out-of-sample MSFE per method, long format.

    The first half of each sample is the initial window; estimates are
    updated at every point of the second half (h = 1).
    """
    methods = [canonical_method(m) for m in methods]
    T_values = tuple(int(t) for t in T_values)
    for T in T_values:
        if T < 8:
            raise InvalidInputError(f"T={T} is too short")
    tasks = []
    children = np.random.SeedSequence(seed).spawn(len(T_values) * n_rep)
    i = 0
    for T in T_values:
        for rep in range(n_rep):
            tasks.append((dgp, T, rep, methods, grid_count, children[i]))
            i += 1
    rows = _run_tasks(_msfe_task, tasks, n_jobs)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def _run_tasks(fn, tasks, n_jobs: int) -> List[dict]:
    if n_jobs == 1 or len(tasks) <= 1:
        chunks = [fn(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(fn, tasks))
    rows: List[dict] = []
    for chunk in chunks:
        rows.extend(chunk)
    return rows


def results_to_csv(df: pd.DataFrame, path) -> None:
    """Write a long-format results table (plot-ready)."""
    df.to_csv(path, index=False)
