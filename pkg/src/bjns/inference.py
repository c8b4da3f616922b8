"""Post-processing of Gibbs output: majority vote, intervals, kappa, estimates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ABSENT, DiagState, ThetaState, assemble_all, edge_index, n_edges

MIN_CI_DRAWS = 20


class NotEnoughSamples(ValueError):
    pass


@dataclass
class SelectionTrace:
    """Per-edge category counts plus the raw retained draws.

    ``counts[e, 0]`` counts absent draws and ``counts[e, l + 1]`` draws in
    component ``l``.
    """

    spec: object
    p: int
    counts: np.ndarray
    components: np.ndarray
    values: np.ndarray
    diag: np.ndarray

    @classmethod
    def from_chain(cls, chain):
        return cls.from_draws(chain.spec, chain.p, chain.components, chain.values, chain.diag)

    @classmethod
    def from_draws(cls, spec, p, components, values, diag):
        comps = np.asarray(components)
        L = spec.n_components
        E = n_edges(p)
        counts = np.zeros((E, L + 1), dtype=np.int64)
        for c in range(-1, L):
            counts[:, c + 1] = np.count_nonzero(comps == c, axis=0)
        return cls(spec, p, counts, comps, np.asarray(values), np.asarray(diag))

    @property
    def n_samples(self):
        return int(self.counts[0].sum()) if self.counts.size else 0


@dataclass
class FitResult:
    """Selected category and summary of every edge, plus group estimates.

    ``component[e]`` is -1 when the edge is selected absent; ``estimate[e]``
    is then 0.  ``ci`` is NaN where fewer than 20 draws back the interval.
    """

    spec: object
    p: int
    component: np.ndarray
    frequency: np.ndarray
    estimate: np.ndarray
    ci: np.ndarray
    diag_mean: np.ndarray
    n_samples: int
    level: float = 0.95

    @property
    def theta(self):
        return ThetaState(self.p, self.component.copy(), self.estimate.copy())

    def adjacency(self, k):
        out = np.zeros(self.component.shape, dtype=bool)
        present = self.component >= 0
        out[present] = self.spec.membership[self.component[present], k - 1]
        return out

    def edge_counts(self):
        """Number of selected edges per component."""
        sel = self.component[self.component >= 0]
        return np.bincount(sel, minlength=self.spec.n_components)

    def to_dict(self):
        iu, ju = edge_index(self.p)
        edges = []
        for e in range(self.component.size):
            c = int(self.component[e])
            lo, hi = self.ci[e]
            edges.append({
                "i": int(iu[e]) + 1, "j": int(ju[e]) + 1,
                "component": list(self.spec.components[c]) if c >= 0 else None,
                "freq": float(self.frequency[e]),
                "est": float(self.estimate[e]),
                "ci": [None if np.isnan(lo) else float(lo), None if np.isnan(hi) else float(hi)],
            })
        groups = []
        for k in range(1, self.spec.K + 1):
            adj = np.flatnonzero(self.adjacency(k))
            groups.append({
                "group": k,
                "edges": [[int(iu[e]) + 1, int(ju[e]) + 1] for e in adj],
                "diag": [float(x) for x in self.diag_mean[k - 1]],
            })
        return {"spec": self.spec.to_dict(), "p": self.p, "n_samples": self.n_samples,
                "level": self.level, "edges": edges, "groups": groups}

    @classmethod
    def from_dict(cls, d):
        from .model import ModelSpec

        spec = ModelSpec.from_dict(d["spec"])
        p = int(d["p"])
        E = n_edges(p)
        comp = np.full(E, ABSENT, dtype=np.int64)
        freq = np.zeros(E)
        est = np.zeros(E)
        ci = np.full((E, 2), np.nan)
        iu, ju = edge_index(p)
        lookup = {(int(a) + 1, int(b) + 1): e for e, (a, b) in enumerate(zip(iu, ju))}
        for rec in d["edges"]:
            e = lookup[(rec["i"], rec["j"])]
            comp[e] = ABSENT if rec["component"] is None else spec.index(rec["component"])
            freq[e] = rec["freq"]
            est[e] = rec["est"]
            ci[e] = [np.nan if x is None else x for x in rec["ci"]]
        diag = np.array([g["diag"] for g in d["groups"]], dtype=float)
        return cls(spec, p, comp, freq, est, ci, diag, int(d["n_samples"]), float(d.get("level", 0.95)))


def majority_vote(trace):
    """Most frequent category per edge.

    Ties go to "absent" first, then to the lowest component index; this
    is exactly ``argmax`` over the columns (absent, 0, 1, ...).
    """
    if trace.n_samples == 0:
        raise ValueError("empty trace")
    best = np.argmax(trace.counts, axis=1)
    freq = trace.counts[np.arange(best.size), best] / trace.n_samples
    return best - 1, freq


def credible_interval(trace, i, j, component, level=0.95):
    """Equal-tailed empirical interval of the draws of ``component`` at edge (i, j).

    Indices are 0-based.  Needs at least 20 draws in that component.
    """
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    if i > j:
        i, j = j, i
    p = trace.p
    e = i * p - i * (i + 1) // 2 + (j - i - 1)
    draws = trace.values[trace.components[:, e] == component, e]
    if draws.size < MIN_CI_DRAWS:
        raise NotEnoughSamples(f"edge ({i}, {j}) has {draws.size} draws in component {component}")
    alpha = 1 - level
    lo, hi = np.quantile(draws, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def summarize(trace, level=0.95):
    """Majority-vote :class:`FitResult` with point estimates and intervals."""
    sel, freq = majority_vote(trace)
    E = sel.size
    est = np.zeros(E)
    ci = np.full((E, 2), np.nan)
    alpha = 1 - level
    for e in np.flatnonzero(sel >= 0):
        draws = trace.values[trace.components[:, e] == sel[e], e]
        est[e] = draws.mean()
        if draws.size >= MIN_CI_DRAWS:
            ci[e] = np.quantile(draws, [alpha / 2, 1 - alpha / 2])
    diag_mean = trace.diag.mean(axis=0)
    return FitResult(trace.spec, trace.p, sel.astype(np.int64), freq, est, ci, diag_mean,
                     trace.n_samples, level)


def truth_categories(truth, spec):
    """True per-edge category expressed as an index into ``spec``.

    A true component missing from ``spec`` maps to -2 (never matched).
    """
    comp = truth.theta.component
    out = np.full(comp.shape, ABSENT, dtype=np.int64)
    for l, subset in enumerate(truth.spec.components):
        idx = spec.index(subset) if subset in spec.components else -2
        out[comp == l] = idx
    return out


def kappa(selected, true_categories):
    """Fraction of edges whose selected category equals the true one."""
    sel = np.asarray(selected)
    tru = np.asarray(true_categories)
    if sel.shape[-1] != tru.shape[-1]:
        raise ValueError("dimension mismatch between selection and truth")
    return np.mean(sel == tru, axis=-1)


def kappa_trace(trace, truth):
    """Per-sweep kappa over the retained draws."""
    return kappa(trace.components, truth_categories(truth, trace.spec))


def stability(trace):
    """Per-edge frequency of the selected category in each half of the trace.

    A plain stand-in for kappa when no ground truth exists.
    """
    n = trace.n_samples
    if n < 2:
        raise ValueError("need at least 2 samples to split the trace")
    sel, _ = majority_vote(trace)
    h = n // 2
    first = np.mean(trace.components[:h] == sel, axis=0)
    second = np.mean(trace.components[h:] == sel, axis=0)
    return first, second


def estimate_matrices(fit, spec=None):
    """Group precision estimates from the selected components and diag means."""
    spec = spec or fit.spec
    delta = DiagState(np.array(fit.diag_mean, dtype=float))
    return assemble_all(fit.theta, delta, spec)


def fit(stats, spec, cfg=None, hyper=None, prior=None, level=0.95):
    """Run one chain and summarize it; returns ``(FitResult, SelectionTrace)``."""
    from .gibbs import run_chain

    chain = run_chain(stats, spec, cfg, hyper, prior)
    trace = SelectionTrace.from_chain(chain)
    return summarize(trace, level), trace
