"""Per-group sample statistics and the cached pseudo-likelihood quadratic form.

The quadratic form ``sum_k tr[(Omega^k)^2 S^k]`` written in the stacked
parameter vectors ``(Theta, Delta)`` has a block matrix of dimension
``p(p-1)/2 * L`` which is never built in the sampler.  Instead we keep
``T[k] = S[k] @ Omega^k`` for every group; every quantity the Gibbs
updates need is a couple of entries of ``T`` plus diagonals of ``S``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ABSENT, DiagState, ThetaState, assemble_omega, edge_index, n_edges

DRIFT_TOL = 1e-9


@dataclass(frozen=True)
class GroupStats:
    """Sample sizes ``n`` (K,) and covariances ``S`` (K, p, p)."""

    n: np.ndarray
    S: np.ndarray

    @property
    def K(self):
        return self.S.shape[0]

    @property
    def p(self):
        return self.S.shape[1]


def compute_group_stats(data, center=True):
    """Sample covariance of each group with divisor ``n_k``.

    Parameters
    ----------
    data : sequence of array-like, each shape (n_k, p)
        Observations per group.
    center : bool
        Subtract column means before forming ``Y'Y / n_k``.
    """
    mats = [np.asarray(Y, dtype=float) for Y in data]
    if not mats:
        raise ValueError("need at least one group")
    p = mats[0].shape[1] if mats[0].ndim == 2 else None
    for k, Y in enumerate(mats):
        if Y.ndim != 2 or Y.shape[1] != p:
            raise ValueError(f"group {k + 1}: expected an (n, {p}) matrix, got shape {Y.shape}")
        if Y.shape[0] < 2:
            raise ValueError(f"group {k + 1}: need at least 2 observations, got {Y.shape[0]}")
        if not np.all(np.isfinite(Y)):
            raise ValueError(f"group {k + 1}: non-finite values in data")
    if p < 2:
        raise ValueError("need at least 2 variables")
    S = []
    for Y in mats:
        if center:
            Y = Y - Y.mean(axis=0)
        C = Y.T @ Y / Y.shape[0]
        S.append(0.5 * (C + C.T))
    n = np.array([Y.shape[0] for Y in mats], dtype=float)
    return GroupStats(n=n, S=np.stack(S))


class CacheConsistencyError(RuntimeError):
    pass


class QuadFormCache:
    """Holds a chain's state together with ``T[k] = S[k] @ Omega^k``.

    The cache owns ``theta`` and ``delta``; mutate them only through
    :meth:`apply_theta_update` and :meth:`apply_diag_update` so that ``T``
    stays in sync.
    """

    def __init__(self, stats, spec, theta, delta):
        if stats.K != spec.K:
            raise ValueError(f"stats have {stats.K} groups but spec has K={spec.K}")
        if theta.p != stats.p or delta.diag.shape != (spec.K, stats.p):
            raise ValueError("state dimensions do not match the data")
        self.stats = stats
        self.spec = spec
        self.theta = theta
        self.delta = delta
        self.T = np.empty_like(stats.S)
        self.refresh()

    def refresh(self):
        """Recompute ``T`` from scratch; returns the max abs drift removed."""
        fresh = self._fresh()
        drift = float(np.max(np.abs(fresh - self.T))) if np.all(np.isfinite(self.T)) else np.inf
        self.T[...] = fresh
        return drift

    def _fresh(self):
        out = np.empty_like(self.stats.S)
        for k in range(self.spec.K):
            out[k] = self.stats.S[k] @ assemble_omega(self.theta, self.delta, self.spec, k + 1)
        return out

    def verify(self, rtol=DRIFT_TOL):
        fresh = self._fresh()
        scale = max(1.0, float(np.max(np.abs(fresh))))
        err = float(np.max(np.abs(fresh - self.T)))
        if err > rtol * scale:
            raise CacheConsistencyError(f"cache drifted by {err:.3e} (scale {scale:.3e})")
        return err

    def omega(self, k):
        return assemble_omega(self.theta, self.delta, self.spec, k)

    def residual_inner(self, k, i, j):
        """``Omega_{:i}' S_{:j} + Omega_{:j}' S_{:i}`` for group ``k`` (0-based indices)."""
        if i == j:
            raise ValueError("residual_inner needs i != j")
        return self.T[k, j, i] + self.T[k, i, j]

    def upsilon_diag(self, l, i, j):
        """Diagonal of the quadratic-form block for component ``l`` at edge (i, j)."""
        S = self.stats.S
        groups = np.flatnonzero(self.spec.membership[l])
        return float(np.sum(S[groups, i, i] + S[groups, j, j]))

    def _edge(self, i, j):
        if i > j:
            i, j = j, i
        p = self.stats.p
        return i * p - i * (i + 1) // 2 + (j - i - 1)

    def apply_theta_update(self, i, j, old, new):
        """Move edge (i, j) from ``old`` to ``new`` (each a ``(component, value)`` pair)."""
        e = self._edge(i, j)
        cur = (int(self.theta.component[e]), float(self.theta.value[e]))
        if (int(old[0]), float(old[1])) != cur:
            raise CacheConsistencyError(f"edge ({i}, {j}) is {cur}, not {old}")
        S = self.stats.S
        member = self.spec.membership
        for k in range(self.spec.K):
            before = old[1] if old[0] != ABSENT and member[old[0], k] else 0.0
            after = new[1] if new[0] != ABSENT and member[new[0], k] else 0.0
            d = after - before
            if d != 0.0:
                self.T[k, :, j] += d * S[k, :, i]
                self.T[k, :, i] += d * S[k, :, j]
        if new[0] == ABSENT or new[1] == 0.0:
            self.theta.component[e] = ABSENT
            self.theta.value[e] = 0.0
        else:
            self.theta.component[e] = int(new[0])
            self.theta.value[e] = float(new[1])

    def apply_diag_update(self, k, i, old, new):
        if self.delta.diag[k, i] != old:
            raise CacheConsistencyError(f"diagonal ({k}, {i}) is {self.delta.diag[k, i]}, not {old}")
        d = new - old
        if d != 0.0:
            self.T[k, :, i] += d * self.stats.S[k, :, i]
        self.delta.diag[k, i] = new


def residual_inner(cache, k, i, j):
    return cache.residual_inner(k, i, j)


def upsilon_diag(cache, l, i, j):
    return cache.upsilon_diag(l, i, j)


def apply_theta_update(cache, i, j, old, new):
    cache.apply_theta_update(i, j, old, new)


def apply_diag_update(cache, k, i, old, new):
    cache.apply_diag_update(k, i, old, new)


# ---------------------------------------------------------------------------
# dense oracle (test scale only)

ORACLE_MAX_P = 50
ORACLE_MAX_COMPONENTS = 15


def group_block(S):
    """Per-group block ``B`` over edges (12, 13, ..., p-1 p).

    Diagonal entries are ``s_aa + s_bb``; two edges sharing one endpoint
    couple through the covariance of their other endpoints.
    """
    p = S.shape[0]
    iu, ju = edge_index(p)
    E = iu.size
    B = np.zeros((E, E))
    for e1 in range(E):
        a, b = iu[e1], ju[e1]
        B[e1, e1] = S[a, a] + S[b, b]
        for e2 in range(e1 + 1, E):
            c, d = iu[e2], ju[e2]
            shared = {a, b} & {c, d}
            if len(shared) == 1:
                m = shared.pop()
                x = a if b == m else b
                y = c if d == m else d
                B[e1, e2] = B[e2, e1] = S[x, y]
    return B


@dataclass(frozen=True)
class DenseQuadForm:
    """Dense blocks with ``sum_k w_k tr[(Omega^k)^2 S^k] = T'UT + 2T'A D + D'Dd D``.

    ``Theta`` is component-major (all edges of component 0, then 1, ...)
    and ``Delta`` is group-major (``delta[k * p + i]``).
    """

    upsilon: np.ndarray
    A: np.ndarray
    D: np.ndarray
    p: int
    L: int

    def a(self, delta):
        return self.A @ np.asarray(delta, dtype=float).ravel()

    def value(self, theta_vec, delta_vec):
        t = np.asarray(theta_vec, dtype=float)
        d = np.asarray(delta_vec, dtype=float).ravel()
        return float(t @ self.upsilon @ t + 2 * t @ self.A @ d + d @ self.D @ d)


def theta_vector(theta, L):
    """Component-major stacking of a :class:`ThetaState`."""
    return theta.theta_vectors(L).T.ravel()


def materialize_oracle(stats, spec, weights=None):
    """Dense ``Upsilon``, ``A`` and ``D`` for small problems.

    ``weights`` (K,) scales each group's contribution; pass ``stats.n``
    for the sample-size weighted form used by the posterior.
    """
    p, K, L = stats.p, spec.K, spec.n_components
    if p > ORACLE_MAX_P or L > ORACLE_MAX_COMPONENTS:
        raise ValueError(
            f"dense oracle limited to p <= {ORACLE_MAX_P} and <= {ORACLE_MAX_COMPONENTS} components")
    w = np.ones(K) if weights is None else np.asarray(weights, dtype=float)
    E = n_edges(p)
    iu, ju = edge_index(p)
    member = spec.membership
    U = np.zeros((E * L, E * L))
    A = np.zeros((E * L, K * p))
    Dd = np.zeros(K * p)
    for k in range(K):
        S = stats.S[k]
        B = w[k] * group_block(S)
        ls = np.flatnonzero(member[:, k])
        for l in ls:
            for m in ls:
                U[l * E:(l + 1) * E, m * E:(m + 1) * E] += B
            rows = l * E + np.arange(E)
            A[rows, k * p + iu] += w[k] * S[iu, ju]
            A[rows, k * p + ju] += w[k] * S[iu, ju]
        Dd[k * p:(k + 1) * p] = w[k] * np.diag(S)
    return DenseQuadForm(upsilon=U, A=A, D=np.diag(Dd), p=p, L=L)


def direct_trace_form(stats, theta, delta, spec, weights=None):
    """``sum_k w_k tr[(Omega^k)^2 S^k]`` by plain matrix algebra."""
    w = np.ones(spec.K) if weights is None else np.asarray(weights, dtype=float)
    total = 0.0
    for k in range(spec.K):
        Om = assemble_omega(theta, delta, spec, k + 1)
        total += w[k] * np.trace(Om @ Om @ stats.S[k])
    return total
