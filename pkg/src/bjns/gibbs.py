"""Gibbs sampler over per-edge component mixtures and diagonal entries.

One sweep visits edges in row-major order.  For each edge a shrinkage
parameter is drawn per component, the edge's coefficient vector is
redrawn from its mixture conditional (absent, or exactly one component
active with a normal value), and after finishing row ``i`` the diagonals
``psi^k_ii`` of every group are refreshed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import ABSENT, DiagState, ModelSpec, ThetaState, edge_index, n_edges
from .stats import QuadFormCache

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """The sampler met a degenerate numeric configuration."""


@dataclass(frozen=True)
class ShrinkageHyper:
    """Gamma(shape ``r``, rate ``s``) hyperprior on every shrinkage parameter."""

    r: float = 1e-2
    s: float = 1e-6

    def __post_init__(self):
        if not (self.r > 0 and self.s > 0):
            raise ValueError(f"need r > 0 and s > 0, got r={self.r}, s={self.s}")


@dataclass(frozen=True)
class PriorConfig:
    """Edge inclusion prior.

    ``mode="literal"`` weights the absent category and every component
    equally (beyond the normal-integral factors).  ``mode="corrected"``
    multiplies each component's weight by the pattern-prior ratio for
    adding one edge, using ``q1`` while the resulting density is at most
    ``tau`` and ``q2`` beyond it.
    """

    q1: float = 0.01
    q2: float = 1e-4
    tau: float = float("inf")
    mode: str = "literal"

    def __post_init__(self):
        if self.mode not in ("literal", "corrected"):
            raise ValueError(f"unknown prior mode {self.mode!r}")
        if not (0 < self.q2 <= self.q1 < 1):
            raise ValueError(f"need 0 < q2 <= q1 < 1, got q1={self.q1}, q2={self.q2}")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")

    @classmethod
    def default_for(cls, p, n, mode="literal"):
        """Defaults shaped like the theoretical decay rates.

        ``q1 = max(1/p, 1e-4)``, ``q2 = q1**2`` and
        ``tau = 0.25 * sqrt(n / log p)`` with ``n`` the mean group size.
        """
        q1 = max(1.0 / p, 1e-4)
        q1 = min(q1, 0.5)
        tau = 0.25 * math.sqrt(float(np.mean(n)) / math.log(p)) if p > 1 else float("inf")
        return cls(q1=q1, q2=q1 * q1, tau=tau, mode=mode)

    @property
    def mode_code(self):
        return _kernels.PRIOR_LITERAL if self.mode == "literal" else _kernels.PRIOR_CORRECTED


@dataclass(frozen=True)
class ChainConfig:
    burnin: int = 2000
    samples: int = 2000
    seed: int = 0
    diag_sampler: str = "point_mass"
    refresh_every: int = 500

    def __post_init__(self):
        if self.burnin < 0 or self.samples < 1:
            raise ValueError("need burnin >= 0 and samples >= 1")
        if self.diag_sampler not in ("grid", "point_mass"):
            raise ValueError(f"unknown diag sampler {self.diag_sampler!r}")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")


@dataclass(frozen=True)
class MixtureParams:
    """Per-component normal parameters and log mixture weights for one edge."""

    mu: np.ndarray
    nu2: np.ndarray
    log_c: np.ndarray


# ---------------------------------------------------------------------------
# conditional draws


def draw_lambda(theta_value, hyper, rng):
    """Shrinkage for one coefficient: Gamma(r + 1/2, rate theta^2/2 + s)."""
    rate = 0.5 * theta_value ** 2 + hyper.s
    return rng.standard_gamma(hyper.r + 0.5) / rate


def draw_gamma_diag(delta_value, hyper, rng):
    """Shrinkage for one diagonal: Gamma(r + 1, rate |delta| + s)."""
    rate = abs(delta_value) + hyper.s
    return rng.standard_gamma(hyper.r + 1.0) / rate


def edge_mixture_params(cache, i, j, lambdas):
    """Mixture parameters of edge ``(i, j)`` given everything else.

    The edge's own current contribution is removed from the cached
    residuals before forming ``mu``, ``nu2`` and ``log c`` per component.
    """
    stats, spec = cache.stats, cache.spec
    S, nk = stats.S, stats.n
    e = cache._edge(i, j)
    cur, v = int(cache.theta.component[e]), float(cache.theta.value[e])
    K, L = spec.K, spec.n_components
    lambdas = np.broadcast_to(np.asarray(lambdas, dtype=float), (L,))
    R = np.empty(K)
    for k in range(K):
        R[k] = cache.residual_inner(k, i, j)
        if cur != ABSENT and spec.membership[cur, k]:
            R[k] -= v * (S[k, i, i] + S[k, j, j])
    mu = np.empty(L)
    nu2 = np.empty(L)
    log_c = np.empty(L)
    for l in range(L):
        groups = spec.membership[l]
        num = float(np.sum(nk[groups] * R[groups]))
        ups = float(np.sum(nk[groups] * (S[groups, i, i] + S[groups, j, j])))
        prec = ups + lambdas[l]
        if not prec > 0:
            raise NumericError(f"non-positive conditional precision at edge ({i}, {j})")
        mu[l] = -num / prec
        nu2[l] = 1.0 / prec
        log_c[l] = 0.5 * math.log(2 * math.pi * nu2[l]) + mu[l] ** 2 / (2 * nu2[l])
    return MixtureParams(mu=mu, nu2=nu2, log_c=log_c)


def category_log_weights(params, prior, current_density, p):
    """Log weights of (absent, component 0, ..., component L-1)."""
    odds = _kernels.prior_log_odds(prior.mode_code, int(current_density), prior.q1, prior.q2,
                                   float(prior.tau), n_edges(p))
    return np.concatenate([[0.0], params.log_c + odds])


def category_probabilities(params, prior, current_density, p):
    lw = category_log_weights(params, prior, current_density, p)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def sample_theta_ij(params, prior, current_density, rng, p=None, u=None, z=None):
    """Draw ``(component, value)`` for one edge.

    ``current_density`` counts the present edges other than this one and
    matters only in corrected prior mode (``p`` is then required).
    Returns ``(ABSENT, 0.0)`` when the absent category is chosen.
    """
    if prior.mode == "corrected" and p is None:
        raise ValueError("corrected prior mode needs p")
    lw = category_log_weights(params, prior, current_density, p or 2)
    u = rng.random() if u is None else u
    z = rng.standard_normal() if z is None else z
    c = _kernels.select_category(lw, u) - 1
    if c < 0:
        return ABSENT, 0.0
    value = params.mu[c] + math.sqrt(params.nu2[c]) * z
    if value == 0.0:
        return ABSENT, 0.0
    return int(c), float(value)


def diag_mode(n, s_ii, b):
    """Mode of ``t^n exp(-n s t^2 / 2 - b t)`` on ``t > 0``."""
    if not s_ii > 0:
        raise NumericError("diagonal update needs s_ii > 0")
    return float(_kernels.diag_mode(float(n), float(s_ii), float(b)))


def diag_log_density(t, n, s_ii, b):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return n * np.log(t) - 0.5 * n * s_ii * t ** 2 - b * t


def sample_diag(n, s_ii, b, mode_cfg, rng, size=None):
    """Draw a diagonal entry from its conditional.

    ``mode_cfg="grid"`` samples the density discretised on
    ``0, 0.001, ..., 6 * mode``; ``"point_mass"`` returns the mode.
    """
    m = diag_mode(n, s_ii, b)
    if mode_cfg == "point_mass":
        return m if size is None else np.full(size, m)
    if mode_cfg != "grid":
        raise ValueError(f"unknown diag sampler {mode_cfg!r}")
    u = rng.random(1 if size is None else size)
    out, fell = _kernels.grid_draws(float(n), float(s_ii), float(b), u)
    if fell:
        log.warning("diagonal grid degenerate for n=%s s=%s b=%s; returned the mode", n, s_ii, b)
    return float(out[0]) if size is None else out


def compute_b(cache, gamma_draw, k, i):
    """``gamma + n_k * sum_{j != i} omega^k_ij s^k_ij`` from the cache."""
    S = cache.stats.S
    psi = cache.delta.diag[k, i]
    return gamma_draw + cache.stats.n[k] * (cache.T[k, i, i] - S[k, i, i] * psi)


# ---------------------------------------------------------------------------
# sweeps and chains


@dataclass
class SweepNoise:
    """Pre-drawn randomness for one sweep."""

    lam_std: np.ndarray  # (E, L) standard Gamma(r + 1/2)
    u_cat: np.ndarray  # (E,)
    z: np.ndarray  # (E,)
    gam_std: np.ndarray  # (K, p) standard Gamma(r + 1)
    u_diag: np.ndarray  # (K, p)


def draw_sweep_noise(rng, E, L, K, p, hyper):
    return SweepNoise(
        lam_std=rng.standard_gamma(hyper.r + 0.5, size=(E, L)),
        u_cat=rng.random(E),
        z=rng.standard_normal(E),
        gam_std=rng.standard_gamma(hyper.r + 1.0, size=(K, p)),
        u_diag=rng.random((K, p)),
    )


_EMPTY_LAMBDA = np.zeros((0, 0))


def gibbs_sweep(cache, hyper, prior, cfg, rng, noise=None, fixed_lambda=None, update_diag=True):
    """Advance the state held by ``cache`` by one sweep (in place).

    ``fixed_lambda`` (E, L) holds the shrinkage parameters fixed instead
    of redrawing them; ``update_diag=False`` keeps the diagonals fixed.
    Returns the number of grid-sampler fallbacks.
    """
    stats, spec = cache.stats, cache.spec
    p, K, L = stats.p, spec.K, spec.n_components
    E = n_edges(p)
    if noise is None:
        noise = draw_sweep_noise(rng, E, L, K, p, hyper)
    use_fixed = fixed_lambda is not None
    fl = np.ascontiguousarray(fixed_lambda, dtype=float) if use_fixed else _EMPTY_LAMBDA
    if use_fixed and fl.shape != (E, L):
        raise ValueError(f"fixed_lambda must have shape {(E, L)}")
    theta, delta = cache.theta, cache.delta
    density, fallbacks, err = _kernels.gibbs_sweep_kernel(
        stats.S, stats.n, spec.membership, theta.component, theta.value, delta.diag, cache.T,
        theta.density, noise.lam_std, noise.u_cat, noise.z, noise.gam_std, noise.u_diag,
        float(hyper.s), fl, use_fixed, bool(update_diag), cfg.diag_sampler == "grid",
        prior.mode_code, float(prior.q1), float(prior.q2), float(prior.tau))
    if err == _kernels.ERR_PRECISION:
        raise NumericError("non-positive conditional precision for an edge")
    if err == _kernels.ERR_DEGENERATE_DIAG:
        raise NumericError("diagonal update needs s_ii > 0 (a variable has zero sample variance)")
    if fallbacks:
        log.warning("diagonal grid sampler fell back to the mode %d time(s)", fallbacks)
    return fallbacks


def reference_sweep(cache, hyper, prior, cfg, noise, fixed_lambda=None, update_diag=True):
    """Slow pure-Python sweep built from the single-step operations.

    Consumes ``noise`` exactly like the compiled kernel; kept as an
    independent check of it.
    """
    stats, spec = cache.stats, cache.spec
    p, K, L = stats.p, spec.K, spec.n_components

    def diag_pass(i):
        for k in range(K):
            psi = cache.delta.diag[k, i]
            gamma = noise.gam_std[k, i] / (abs(psi) + hyper.s)
            b = compute_b(cache, gamma, k, i)
            sii = stats.S[k, i, i]
            if cfg.diag_sampler == "grid":
                new, _ = _kernels.sample_diag_grid(stats.n[k], sii, b, noise.u_diag[k, i])
            else:
                new = diag_mode(stats.n[k], sii, b)
            cache.apply_diag_update(k, i, psi, new)

    e = 0
    for i in range(p - 1):
        for j in range(i + 1, p):
            cur, v = int(cache.theta.component[e]), float(cache.theta.value[e])
            if fixed_lambda is not None:
                lam = fixed_lambda[e]
            else:
                th = np.zeros(L)
                if cur != ABSENT:
                    th[cur] = v
                lam = noise.lam_std[e] / (0.5 * th ** 2 + hyper.s)
            params = edge_mixture_params(cache, i, j, lam)
            d_minus = cache.theta.density - (cur != ABSENT)
            new = sample_theta_ij(params, prior, d_minus, None, p=p, u=noise.u_cat[e], z=noise.z[e])
            cache.apply_theta_update(i, j, (cur, v), new)
            e += 1
        if update_diag:
            diag_pass(i)
    if update_diag:
        diag_pass(p - 1)


@dataclass
class ChainResult:
    """Retained draws of one chain.

    ``components`` is (samples, E) with -1 for absent; ``values`` holds the
    matching edge values (0 when absent); ``diag`` is (samples, K, p).
    """

    spec: ModelSpec
    p: int
    components: np.ndarray
    values: np.ndarray
    diag: np.ndarray
    config: ChainConfig = field(default=None)

    @property
    def n_samples(self):
        return self.components.shape[0]


def initial_state(spec, p):
    return ThetaState.empty(p), DiagState.ones(spec.K, p)


def run_chain(stats, spec, cfg=None, hyper=None, prior=None, fixed_lambda=None,
              update_diag=True, theta=None, delta=None, callback=None):
    """Run burn-in plus retained sweeps from the identity / zero start.

    Parameters
    ----------
    stats : GroupStats
    spec : ModelSpec
    cfg : ChainConfig
    hyper : ShrinkageHyper
    prior : PriorConfig
        Defaults to :meth:`PriorConfig.default_for` in literal mode.
    fixed_lambda, update_diag
        Hold shrinkage parameters / diagonals fixed (used by exactness
        checks against the closed-form pattern posterior).
    theta, delta
        Optional starting state (copied).
    callback : callable, optional
        ``callback(sweep_index, cache)`` after every sweep.
    """
    cfg = cfg or ChainConfig()
    hyper = hyper or ShrinkageHyper()
    prior = prior or PriorConfig.default_for(stats.p, stats.n)
    if stats.K != spec.K:
        raise ValueError(f"data have {stats.K} groups but spec has K={spec.K}")
    p = stats.p
    th0, de0 = initial_state(spec, p)
    theta = th0 if theta is None else theta.copy()
    delta = de0 if delta is None else delta.copy()
    cache = QuadFormCache(stats, spec, theta, delta)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    E, L, K = n_edges(p), spec.n_components, spec.K
    comps = np.empty((cfg.samples, E), dtype=np.int16 if L < 32000 else np.int32)
    vals = np.empty((cfg.samples, E))
    diags = np.empty((cfg.samples, K, p))
    total = cfg.burnin + cfg.samples
    for t in range(total):
        gibbs_sweep(cache, hyper, prior, cfg, rng, fixed_lambda=fixed_lambda, update_diag=update_diag)
        if (t + 1) % cfg.refresh_every == 0:
            cache.refresh()
        if callback is not None:
            callback(t, cache)
        if t >= cfg.burnin:
            s = t - cfg.burnin
            comps[s] = cache.theta.component
            vals[s] = cache.theta.value
            diags[s] = cache.delta.diag
    return ChainResult(spec=spec, p=p, components=comps, values=vals, diag=diags, config=cfg)


def run_chains(stats, spec, cfg, n_chains, hyper=None, prior=None, jobs=1):
    """Independent chains seeded from ``SeedSequence(cfg.seed).spawn``."""
    from concurrent.futures import ThreadPoolExecutor
    from dataclasses import replace

    children = np.random.SeedSequence(cfg.seed).spawn(n_chains)
    cfgs = [replace(cfg, seed=int(c.generate_state(1, np.uint64)[0])) for c in children]
    if jobs <= 1:
        return [run_chain(stats, spec, c, hyper, prior) for c in cfgs]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(lambda c: run_chain(stats, spec, c, hyper, prior), cfgs))


def edge_coordinates(p):
    iu, ju = edge_index(p)
    return iu, ju
