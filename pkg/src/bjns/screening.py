"""Component screening for many groups.

Fit every two-group model, drop pairwise components with few selected
edges together with every larger subset containing such a pair, then
refit the reduced family and keep pruning weak components until the
family is stable.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .gibbs import ChainConfig
from .inference import fit
from .model import ModelSpec, n_edges
from .stats import GroupStats

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.2
PAIRWISE_CHAIN = ChainConfig(burnin=1000, samples=1000)


@dataclass
class ScreenEntry:
    component: tuple
    edge_count: int
    active: bool
    stage: str


@dataclass
class ScreenReport:
    K: int
    p: int
    entries: list = field(default_factory=list)

    def stage(self, name):
        return [e for e in self.entries if e.stage == name]

    @property
    def stages(self):
        seen = []
        for e in self.entries:
            if e.stage not in seen:
                seen.append(e.stage)
        return seen

    def inactive_pairs(self):
        return sorted(e.component for e in self.stage("pairwise") if not e.active)

    def to_dict(self):
        return {"K": self.K, "p": self.p,
                "entries": [{"component": list(e.component), "edge_count": int(e.edge_count),
                             "active": bool(e.active), "stage": e.stage} for e in self.entries]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def barplot_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "edge_count", "stage", "active"])
        for e in self.entries:
            w.writerow(["-".join(map(str, e.component)), e.edge_count, e.stage, int(e.active)])
        return buf.getvalue()


def subset_stats(stats, groups):
    """Statistics restricted to the given 1-based groups (in that order)."""
    idx = [g - 1 for g in groups]
    return GroupStats(n=stats.n[idx].copy(), S=stats.S[idx].copy())


def _pair_seed(seed, pair):
    return int(np.random.SeedSequence([int(seed), *pair]).generate_state(1, np.uint64)[0] >> 1)


def _map_jobs(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def pairwise_screen(stats, cfg=PAIRWISE_CHAIN, hyper=None, prior=None, jobs=1, alpha=DEFAULT_ALPHA,
                    rule="relative"):
    """Fit the model ``{k1}, {k2}, {k1,k2}`` for every pair of groups.

    The report holds the selected edge count of each pairwise component;
    ``active`` flags follow :func:`inactive_mask`.
    """
    K = stats.K
    if K < 3:
        raise ValueError("pairwise screening needs K >= 3")
    pairs = list(itertools.combinations(range(1, K + 1), 2))
    spec2 = ModelSpec.full(2)
    shared = spec2.index((1, 2))

    def run(pair):
        sub = subset_stats(stats, pair)
        c = replace(cfg, seed=_pair_seed(cfg.seed, pair))
        result, _ = fit(sub, spec2, c, hyper, prior)
        return int(result.edge_counts()[shared])

    counts = _map_jobs(run, pairs, jobs)
    inactive = inactive_mask(np.array(counts), alpha, rule)
    report = ScreenReport(K=K, p=stats.p)
    for pair, cnt, off in zip(pairs, counts, inactive):
        report.entries.append(ScreenEntry(pair, cnt, not off, "pairwise"))
    return report


def inactive_mask(counts, alpha=DEFAULT_ALPHA, rule="relative"):
    """Flag components with markedly fewer edges than the busiest one.

    ``rule="relative"``: inactive iff ``count < alpha * max(count)``.
    ``rule="kmeans"``: two-means split of the counts (on ``log1p`` scale),
    lower cluster inactive.  Nothing is flagged when the two cluster
    means differ by less than a factor of two.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        return np.zeros(0, dtype=bool)
    top = counts.max()
    if top <= 0:
        return np.ones(counts.shape, dtype=bool)
    if rule == "relative":
        return counts < alpha * top
    if rule != "kmeans":
        raise ValueError(f"unknown pruning rule {rule!r}")
    x = np.log1p(counts)
    vals = np.unique(x)
    if vals.size < 2:
        return np.zeros(counts.shape, dtype=bool)
    best, best_cut = np.inf, None
    for cut in (vals[:-1] + vals[1:]) / 2:
        lo, hi = x[x <= cut], x[x > cut]
        sse = ((lo - lo.mean()) ** 2).sum() + ((hi - hi.mean()) ** 2).sum()
        if sse < best:
            best, best_cut = sse, cut
    lo_mean, hi_mean = x[x <= best_cut].mean(), x[x > best_cut].mean()
    # clusters less than a factor two apart are one cluster
    if hi_mean - lo_mean < np.log(2.0):
        return np.zeros(counts.shape, dtype=bool)
    return x <= best_cut


def prune_components(report, alpha=DEFAULT_ALPHA, K=None, rule=None):
    """Candidate family after pairwise screening.

    Keeps every singleton, every active pair, and every larger subset all
    of whose pairs are active.  ``alpha``/``rule`` re-derive the active
    flags when given; otherwise the report's flags are used.
    """
    K = K or report.K
    entries = report.stage("pairwise")
    if rule is not None or alpha != DEFAULT_ALPHA:
        off = inactive_mask([e.edge_count for e in entries], alpha, rule or "relative")
        active = {e.component for e, o in zip(entries, off) if not o}
    else:
        active = {e.component for e in entries if e.active}
    family = [(k,) for k in range(1, K + 1)]
    for size in range(2, K + 1):
        for subset in itertools.combinations(range(1, K + 1), size):
            if all(pair in active for pair in itertools.combinations(subset, 2)):
                family.append(subset)
    return ModelSpec(K, tuple(family))


def reduce_step(result, alpha=DEFAULT_ALPHA, rule="relative"):
    """Drop non-singleton components with few selected edges.

    Returns ``(new_spec, counts, inactive)`` with ``counts``/``inactive``
    aligned to ``result.spec.components``.
    """
    spec = result.spec
    counts = result.edge_counts()
    multi = np.array([len(c) > 1 for c in spec.components])
    inactive = np.zeros(spec.n_components, dtype=bool)
    if multi.any():
        inactive[multi] = inactive_mask(counts[multi], alpha, rule)
    keep = tuple(c for c, off in zip(spec.components, inactive) if not off)
    return ModelSpec(spec.K, keep), counts, inactive


@dataclass
class ScreenOutcome:
    report: ScreenReport
    spec: ModelSpec
    result: object
    trace: object
    rounds: int


def iterative_reduce(stats, cfg=None, max_rounds=3, hyper=None, prior=None, jobs=1,
                     pairwise_cfg=None, alpha=DEFAULT_ALPHA, rule="relative", start_spec=None):
    """Pairwise screening followed by fit/prune rounds.

    Each round fits the current family with ``cfg`` and removes inactive
    non-singleton components.  Stops when a round removes nothing (that
    round's fit is the final fit) or after ``max_rounds`` rounds, in which
    case one last fit is run on the surviving family.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    cfg = cfg or ChainConfig()
    K = stats.K
    if start_spec is None:
        if K >= 3:
            pcfg = pairwise_cfg or replace(PAIRWISE_CHAIN, seed=cfg.seed, diag_sampler=cfg.diag_sampler)
            report = pairwise_screen(stats, pcfg, hyper, prior, jobs, alpha, rule)
            spec = prune_components(report, K=K)
        else:
            report = ScreenReport(K=K, p=stats.p)
            spec = ModelSpec.full(K)
    else:
        report = ScreenReport(K=K, p=stats.p)
        spec = start_spec
    result = trace = None
    rounds = 0
    changed = True
    while rounds < max_rounds:
        rounds += 1
        round_cfg = replace(cfg, seed=_pair_seed(cfg.seed, (0, rounds)))
        result, trace = fit(stats, spec, round_cfg, hyper, prior)
        new_spec, counts, inactive = reduce_step(result, alpha, rule)
        for comp, cnt, off in zip(spec.components, counts, inactive):
            report.entries.append(ScreenEntry(comp, int(cnt), not off, f"reduced-{rounds}"))
        changed = new_spec.components != spec.components
        log.info("round %d: %d -> %d components", rounds, spec.n_components, new_spec.n_components)
        spec = new_spec
        if not changed:
            break
    if changed:
        final_cfg = replace(cfg, seed=_pair_seed(cfg.seed, (0, rounds + 1)))
        result, trace = fit(stats, spec, final_cfg, hyper, prior)
    for comp, cnt in zip(spec.components, result.edge_counts()):
        report.entries.append(ScreenEntry(comp, int(cnt), True, "final"))
    return ScreenOutcome(report=report, spec=spec, result=result, trace=trace, rounds=rounds)


def n_pairs(K):
    return K * (K - 1) // 2


def max_edges(p):
    return n_edges(p)
