"""JIT-compiled kernels for the hot numerical loops.

Everything here is plain-array in, plain-array out; validation, warm-start
management and wrapping into the domain types happen in the owning modules.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def cd_lasso(gram, linear, lam, beta, tol, max_sweeps):
    """Cyclical coordinate descent for 0.5*b'Gb - b'l + lam*||b||_1.

    ``beta`` is updated in place (warm start). Convergence is declared when
    the largest coordinate change within a sweep drops below ``tol``.
    Returns (sweeps_used, converged).
    """
    p = gram.shape[0]
    u = gram @ beta
    n_sweeps = 0
    converged = False
    for _sweep in range(max_sweeps):
        max_delta = 0.0
        for i in range(p):
            g_ii = gram[i, i]
            r = linear[i] - u[i] + g_ii * beta[i]
            if r > lam:
                b_new = (r - lam) / g_ii
            elif r < -lam:
                b_new = (r + lam) / g_ii
            else:
                b_new = 0.0
            d = b_new - beta[i]
            if d != 0.0:
                beta[i] = b_new
                for k in range(p):
                    u[k] += d * gram[k, i]
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        n_sweeps += 1
        if max_delta < tol:
            converged = True
            break
    return n_sweeps, converged


@njit(cache=True)
def _fill_partition(s, w, j, w11, s12):
    """Copy the block partition for column j: w11 = W without row/col j, s12 = S[-j, j]."""
    p = s.shape[0]
    a = 0
    for ia in range(p):
        if ia == j:
            continue
        s12[a] = s[ia, j]
        b = 0
        for ib in range(p):
            if ib == j:
                continue
            w11[a, b] = w[ia, ib]
            b += 1
        a += 1


@njit(cache=True)
def glasso_engine(s, lam, w, betas, conv_tol, max_cycles, inner_tol, inner_max_sweeps):
    """Block coordinate descent for the graphical lasso.

    ``w`` (the working covariance, diagonal held fixed) and ``betas`` (one
    warm-start row per column subproblem) are updated in place. Cycles stop
    when the mean absolute change of the off-diagonal entries of ``w`` over a
    full cycle falls below ``conv_tol * mean(|s_offdiag|) + 1e-15``.

    Returns (theta, n_cycles, converged, ok); ok is False when a Schur
    complement w_jj - beta'w12 came out non-positive (lost definiteness).
    """
    p = s.shape[0]
    acc = 0.0
    for i in range(p):
        for j in range(p):
            if i != j:
                acc += abs(s[i, j])
    denom = p * (p - 1)
    mean_off = acc / denom
    thresh = conv_tol * mean_off + 1e-15

    w11 = np.empty((p - 1, p - 1))
    s12 = np.empty(p - 1)
    w12 = np.empty(p - 1)

    converged = False
    n_cycles = 0
    for _cycle in range(max_cycles):
        total_change = 0.0
        for j in range(p):
            _fill_partition(s, w, j, w11, s12)
            beta = betas[j]
            cd_lasso(w11, s12, lam, beta, inner_tol, inner_max_sweeps)
            for a in range(p - 1):
                v = 0.0
                for b in range(p - 1):
                    v += w11[a, b] * beta[b]
                w12[a] = v
            a = 0
            for ia in range(p):
                if ia == j:
                    continue
                total_change += abs(w[ia, j] - w12[a])
                w[ia, j] = w12[a]
                w[j, ia] = w12[a]
                a += 1
        n_cycles += 1
        if total_change / denom <= thresh:
            converged = True
            break

    # Final cycle: recover theta column by column from the partitioned inverse.
    theta = np.zeros((p, p))
    ok = True
    for j in range(p):
        _fill_partition(s, w, j, w11, s12)
        beta = betas[j]
        cd_lasso(w11, s12, lam, beta, inner_tol, inner_max_sweeps)
        bw = 0.0
        for a in range(p - 1):
            v = 0.0
            for b in range(p - 1):
                v += w11[a, b] * beta[b]
            w12[a] = v
            bw += beta[a] * v
        a = 0
        for ia in range(p):
            if ia == j:
                continue
            w[ia, j] = w12[a]
            w[j, ia] = w12[a]
            a += 1
        gap = w[j, j] - bw
        if gap <= 0.0:
            ok = False
            gap = 1e-300
        theta_jj = 1.0 / gap
        theta[j, j] = theta_jj
        a = 0
        for ia in range(p):
            if ia == j:
                continue
            theta[ia, j] = -theta_jj * beta[a]
            a += 1
    return theta, n_cycles, converged, ok


@njit(cache=True)
def far_recursion(design, targets, cols, ncols, h, first_pred, z_next):
    """Recursive pseudo-out-of-sample errors plus the end-of-window forecasts.

    design[t] holds the regressors used to predict targets[t] (already lagged
    by the horizon), so predicting row t may only use fit rows tau <= t - h.
    ``cols``/``ncols`` give each model's padded column subset of the design.

    Returns (errors, yhat_next, n_deficient):
      errors      (n - first_pred, M) recursion errors target - prediction
      yhat_next   (M,) forecasts from the full-window fit applied to z_next
      n_deficient number of rank-deficient full-window fits
    """
    n, D = design.shape
    M = cols.shape[0]
    gram = np.zeros((D, D))
    xty = np.zeros(D)
    # rows available before the first prediction
    for t in range(0, first_pred - h):
        zt = design[t]
        yt = targets[t]
        for a in range(D):
            za = zt[a]
            xty[a] += yt * za
            for b in range(D):
                gram[a, b] += za * zt[b]

    n_pred = n - first_pred
    errors = np.empty((n_pred, M))
    for t in range(first_pred, n):
        zt = design[t - h]
        yt = targets[t - h]
        for a in range(D):
            za = zt[a]
            xty[a] += yt * za
            for b in range(D):
                gram[a, b] += za * zt[b]
        for m in range(M):
            d = ncols[m]
            gs = np.empty((d, d))
            bs = np.empty(d)
            tr = 0.0
            for a in range(d):
                ca = cols[m, a]
                bs[a] = xty[ca]
                for b in range(d):
                    gs[a, b] = gram[ca, cols[m, b]]
                tr += gs[a, a]
            # tiny ridge floor keeps the recursion solvable on collinear windows
            ridge = 1e-10 * (tr / d + 1.0)
            for a in range(d):
                gs[a, a] += ridge
            coef = np.linalg.solve(gs, bs)
            pred = 0.0
            for a in range(d):
                pred += coef[a] * design[t, cols[m, a]]
            errors[t - first_pred, m] = targets[t] - pred

    # complete the gram with the remaining rows, then fit each model on the
    # full window for the end-of-window forecast
    for t in range(n - h, n):
        zt = design[t]
        yt = targets[t]
        for a in range(D):
            za = zt[a]
            xty[a] += yt * za
            for b in range(D):
                gram[a, b] += za * zt[b]

    yhat_next = np.empty(M)
    n_deficient = 0
    for m in range(M):
        d = ncols[m]
        gs = np.empty((d, d))
        bs = np.empty(d)
        for a in range(d):
            ca = cols[m, a]
            bs[a] = xty[ca]
            for b in range(d):
                gs[a, b] = gram[ca, cols[m, b]]
        coef, _res, rank, _sv = np.linalg.lstsq(gs, bs)
        if rank < d:
            n_deficient += 1
        pred = 0.0
        for a in range(d):
            pred += coef[a] * z_next[cols[m, a]]
        yhat_next[m] = pred
    return errors, yhat_next, n_deficient
