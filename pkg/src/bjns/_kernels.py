"""Compiled inner loops for the Gibbs sweep.

All randomness is passed in as pre-drawn arrays so that the kernels are
pure functions of their inputs; see ``gibbs._draw_sweep_noise`` for the
layout.
"""
import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
GRID_STEP = 0.001
GRID_SPAN = 6.0

PRIOR_LITERAL = 0
PRIOR_CORRECTED = 1

ERR_NONE = 0
ERR_PRECISION = 1
ERR_DEGENERATE_DIAG = 2


@njit(cache=True, nogil=True)
def log_pattern_prior(d, q1, q2, tau, P):
    q = q1 if d <= tau else q2
    return d * math.log(q) + (P - d) * math.log1p(-q)


@njit(cache=True, nogil=True)
def prior_log_odds(mode, d_minus, q1, q2, tau, P):
    """Log prior ratio of adding one edge to a pattern with ``d_minus`` edges."""
    if mode == PRIOR_LITERAL:
        return 0.0
    return log_pattern_prior(d_minus + 1, q1, q2, tau, P) - log_pattern_prior(d_minus, q1, q2, tau, P)


@njit(cache=True, nogil=True)
def diag_mode(n, s, b):
    root = math.sqrt(b * b + 4.0 * n * n * s)
    if b > 0.0:
        return 2.0 * n / (b + root)
    return (-b + root) / (2.0 * n * s)


@njit(cache=True, nogil=True)
def diag_log_density(t, n, s, b):
    return n * math.log(t) - 0.5 * n * s * t * t - b * t


@njit(cache=True, nogil=True)
def sample_diag_grid(n, s, b, u):
    """Inverse-CDF draw on the grid ``0, step, ..., <= 6 * mode``.

    Weights are taken relative to the weight at the mode, which leaves the
    normalised probabilities unchanged and cannot overflow.  Returns
    ``(value, fell_back)``; the fallback returns the mode.
    """
    mode = diag_mode(n, s, b)
    M = int(math.floor(GRID_SPAN * mode / GRID_STEP + 1e-9))
    if M < 1:
        return mode, True
    ref = diag_log_density(mode, n, s, b)
    w = np.empty(M)
    total = 0.0
    for m in range(M):
        t = (m + 1) * GRID_STEP
        total += math.exp(diag_log_density(t, n, s, b) - ref)
        w[m] = total
    if not total > 0.0 or not math.isfinite(total):
        return mode, True
    target = u * total
    for m in range(M):
        if w[m] > target:
            return (m + 1) * GRID_STEP, False
    return M * GRID_STEP, False


@njit(cache=True, nogil=True)
def select_category(logw, u):
    """Index drawn with probability proportional to ``exp(logw)``."""
    mx = logw[0]
    for c in range(1, logw.size):
        if logw[c] > mx:
            mx = logw[c]
    total = 0.0
    for c in range(logw.size):
        total += math.exp(logw[c] - mx)
    target = u * total
    acc = 0.0
    for c in range(logw.size):
        acc += math.exp(logw[c] - mx)
        if acc > target:
            return c
    return logw.size - 1


@njit(cache=True, nogil=True)
def _update_diag(S, nk, diag, T, k, i, g_std, u, s_rate, grid):
    psi = diag[k, i]
    gamma = g_std / (abs(psi) + s_rate)
    b = gamma + nk[k] * (T[k, i, i] - S[k, i, i] * psi)
    sii = S[k, i, i]
    if not sii > 0.0:
        return ERR_DEGENERATE_DIAG, False
    fell = False
    if grid:
        new, fell = sample_diag_grid(nk[k], sii, b, u)
    else:
        new = diag_mode(nk[k], sii, b)
    d = new - psi
    if d != 0.0:
        p = S.shape[1]
        for m in range(p):
            T[k, m, i] += d * S[k, m, i]
    diag[k, i] = new
    return ERR_NONE, fell


@njit(cache=True, nogil=True)
def gibbs_sweep_kernel(S, nk, member, comp, val, diag, T, density,
                       lam_std, u_cat, z, gam_std, u_diag,
                       s_rate, fixed_lambda, use_fixed_lambda,
                       update_diag, grid, prior_mode, q1, q2, tau):
    """One full sweep in place.  Returns ``(density, n_grid_fallbacks, err)``."""
    K = S.shape[0]
    p = S.shape[1]
    L = member.shape[0]
    P = p * (p - 1) // 2
    R = np.empty(K)
    logw = np.empty(L + 1)
    mus = np.empty(L)
    nu2s = np.empty(L)
    fallbacks = 0
    e = 0
    for i in range(p - 1):
        for j in range(i + 1, p):
            cur = comp[e]
            v = val[e]
            for k in range(K):
                R[k] = T[k, i, j] + T[k, j, i]
                if cur >= 0 and member[cur, k]:
                    R[k] -= v * (S[k, i, i] + S[k, j, j])
            d_minus = density - (1 if cur >= 0 else 0)
            log_odds = prior_log_odds(prior_mode, d_minus, q1, q2, tau, P)
            logw[0] = 0.0
            for l in range(L):
                if use_fixed_lambda:
                    lam = fixed_lambda[e, l]
                else:
                    th = v if l == cur else 0.0
                    lam = lam_std[e, l] / (0.5 * th * th + s_rate)
                num = 0.0
                ups = 0.0
                for k in range(K):
                    if member[l, k]:
                        num += nk[k] * R[k]
                        ups += nk[k] * (S[k, i, i] + S[k, j, j])
                prec = ups + lam
                if not prec > 0.0:
                    return density, fallbacks, ERR_PRECISION
                mus[l] = -num / prec
                nu2s[l] = 1.0 / prec
                logw[l + 1] = 0.5 * (LOG_2PI - math.log(prec)) + 0.5 * num * num / prec + log_odds
            c = select_category(logw, u_cat[e]) - 1
            if c >= 0:
                new = mus[c] + math.sqrt(nu2s[c]) * z[e]
                if new == 0.0:
                    c = -1
            else:
                new = 0.0
            for k in range(K):
                before = v if (cur >= 0 and member[cur, k]) else 0.0
                after = new if (c >= 0 and member[c, k]) else 0.0
                dlt = after - before
                if dlt != 0.0:
                    for m in range(p):
                        T[k, m, j] += dlt * S[k, m, i]
                        T[k, m, i] += dlt * S[k, m, j]
            density += (1 if c >= 0 else 0) - (1 if cur >= 0 else 0)
            comp[e] = c
            val[e] = new
            e += 1
        if update_diag:
            for k in range(K):
                err, fell = _update_diag(S, nk, diag, T, k, i, gam_std[k, i], u_diag[k, i], s_rate, grid)
                if err != ERR_NONE:
                    return density, fallbacks, err
                if fell:
                    fallbacks += 1
    if update_diag:
        for k in range(K):
            err, fell = _update_diag(S, nk, diag, T, k, p - 1, gam_std[k, p - 1], u_diag[k, p - 1],
                                     s_rate, grid)
            if err != ERR_NONE:
                return density, fallbacks, err
            if fell:
                fallbacks += 1
    return density, fallbacks, ERR_NONE


@njit(cache=True, nogil=True)
def grid_draws(n, s, b, u):
    out = np.empty(u.size)
    fell = 0
    for m in range(u.size):
        out[m], f = sample_diag_grid(n, s, b, u[m])
        if f:
            fell += 1
    return out, fell
