"""Ground-truth generators for the simulation designs and edge-recovery metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ABSENT, DiagState, ModelSpec, ThetaState, assemble_all, edge_index, n_edges

SIGNAL_LOW, SIGNAL_HIGH = 0.4, 0.6
PD_TARGET = 0.1


def _signal(rng, size):
    mag = rng.uniform(SIGNAL_LOW, SIGNAL_HIGH, size=size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return mag * sign


def _edge_id(i, j, p):
    if i > j:
        i, j = j, i
    return i * p - i * (i + 1) // 2 + (j - i - 1)


@dataclass
class GroundTruth:
    """True decomposition of ``K`` precision matrices.

    ``theta`` holds the true per-edge category and value under ``spec``;
    ``omegas`` are the (positive definite) group precision matrices.
    """

    spec: ModelSpec
    theta: ThetaState
    delta: DiagState
    omegas: np.ndarray

    @property
    def p(self):
        return self.theta.p

    @property
    def K(self):
        return self.spec.K

    @property
    def d_t(self):
        return self.theta.density

    @property
    def min_signal(self):
        v = np.abs(self.theta.value[self.theta.component >= 0])
        return float(v.min()) if v.size else 0.0

    @property
    def max_signal(self):
        v = np.abs(self.theta.value[self.theta.component >= 0])
        return float(v.max()) if v.size else 0.0

    def adjacency(self, k):
        """Boolean upper-triangle edge vector of group ``k`` (1-based)."""
        comp = self.theta.component
        out = np.zeros(comp.shape, dtype=bool)
        present = comp >= 0
        out[present] = self.spec.membership[comp[present], k - 1]
        return out

    def to_dict(self):
        iu, ju = edge_index(self.p)
        present = np.flatnonzero(self.theta.component >= 0)
        return {
            "p": self.p,
            "spec": self.spec.to_dict(),
            "edges": [
                {"i": int(iu[e]) + 1, "j": int(ju[e]) + 1,
                 "component": list(self.spec.components[self.theta.component[e]]),
                 "value": float(self.theta.value[e])}
                for e in present
            ],
            "diag": self.delta.diag.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        spec = ModelSpec.from_dict(d["spec"])
        p = int(d["p"])
        theta = ThetaState.empty(p)
        for rec in d["edges"]:
            e = _edge_id(rec["i"] - 1, rec["j"] - 1, p)
            theta.component[e] = spec.index(rec["component"])
            theta.value[e] = rec["value"]
        delta = DiagState(np.asarray(d["diag"], dtype=float))
        return cls(spec, theta, delta, assemble_all(theta, delta, spec))


def condition_pd(matrix, min_eig_target=PD_TARGET):
    """Shift the diagonal so the smallest eigenvalue is at least the target."""
    M = np.asarray(matrix, dtype=float)
    lo = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    if lo >= min_eig_target:
        return M.copy()
    return M + (min_eig_target - lo) * np.eye(M.shape[0])


def _finish(spec, theta, p, min_eig_target=PD_TARGET):
    """Build diagonals so every group's precision is positive definite."""
    delta = DiagState.ones(spec.K, p)
    omegas = assemble_all(theta, delta, spec)
    for k in range(spec.K):
        fixed = condition_pd(omegas[k], min_eig_target)
        delta.diag[k] = np.diag(fixed)
        omegas[k] = fixed
    return GroundTruth(spec, theta, delta, omegas)


def gen_ar2(p):
    """Banded AR(2) precision: 1 on the diagonal, 0.5 and 0.25 on the bands."""
    if p < 3:
        raise ValueError("AR(2) design needs p >= 3")
    Om = np.eye(p)
    i = np.arange(p - 1)
    Om[i, i + 1] = Om[i + 1, i] = 0.5
    i = np.arange(p - 2)
    Om[i, i + 2] = Om[i + 2, i] = 0.25
    return Om


@dataclass
class Perturbation:
    matrix: np.ndarray
    removed: list
    added: list


def perturb_graph(base, remove_count, add_count, rng, magnitude_range=(SIGNAL_LOW, SIGNAL_HIGH),
                  removable=None, forbidden=None):
    """Remove existing edges and add new ones with values on ``+-[lo, hi]``.

    ``removable`` restricts which existing edges may be removed and
    ``forbidden`` lists edges that may not be added (both as ``(i, j)``
    pairs with ``i < j``).  Added edges are always absent from ``base``.
    """
    M = np.array(base, dtype=float)
    p = M.shape[0]
    iu, ju = edge_index(p)
    existing = [(int(a), int(b)) for a, b in zip(iu, ju) if M[a, b] != 0]
    pool_rm = existing if removable is None else [e for e in removable if M[e] != 0]
    forbidden = set(forbidden or ()) | set(existing)
    pool_add = [(int(a), int(b)) for a, b in zip(iu, ju) if (int(a), int(b)) not in forbidden]
    if not (0 <= remove_count <= len(pool_rm)) or not (0 <= add_count <= len(pool_add)):
        raise ValueError(f"infeasible perturbation: remove {remove_count} of {len(pool_rm)}, "
                         f"add {add_count} of {len(pool_add)}")
    rm_idx = rng.choice(len(pool_rm), size=remove_count, replace=False) if remove_count else []
    removed = sorted(pool_rm[t] for t in rm_idx)
    for a, b in removed:
        M[a, b] = M[b, a] = 0.0
    add_idx = rng.choice(len(pool_add), size=add_count, replace=False) if add_count else []
    added = sorted(pool_add[t] for t in add_idx)
    lo, hi = magnitude_range
    mags = rng.uniform(lo, hi, size=len(added)) * np.where(rng.random(len(added)) < 0.5, -1.0, 1.0)
    for (a, b), v in zip(added, mags):
        M[a, b] = M[b, a] = v
    return Perturbation(M, removed, added)


def _theta_from_assignments(spec, p, assignments):
    theta = ThetaState.empty(p)
    for (i, j), (subset, value) in assignments.items():
        e = _edge_id(i, j, p)
        theta.component[e] = spec.index(subset)
        theta.value[e] = value
    return theta


def gen_ar2_chain_k4(p, rng):
    """Four groups with nested sharing built from an AR(2) graph.

    Group 2 swaps ``p/4`` AR edges for new ones; group 3 drops ``p/2``
    edges shared by groups 1-2 and adds ``p/2`` new ones; group 4 holds
    ``2p - 3 - 3p/4`` fresh edges only.  True components are
    ``{1}, {2}, {3}, {4}, {1,2}, {1,2,3}``.
    """
    if p < 8:
        raise ValueError("ar2_chain_k4 design needs p >= 8")
    q1, q2 = int(round(p / 4)), int(round(p / 2))
    n_ar = 2 * p - 3
    n4 = n_ar - q1 - q2
    if n4 < 0:
        raise ValueError("p too small for the ar2_chain_k4 design")
    spec = ModelSpec(4, ((1,), (2,), (3,), (4,), (1, 2), (1, 2, 3)))
    O1 = gen_ar2(p)
    step2 = perturb_graph(O1, q1, q1, rng)
    iu, ju = edge_index(p)
    ar_edges = [(int(a), int(b)) for a, b in zip(iu, ju) if O1[a, b] != 0]
    shared12 = [e for e in ar_edges if e not in set(step2.removed)]
    used = set(ar_edges) | set(step2.added)
    step3 = perturb_graph(step2.matrix, q2, 0, rng, removable=shared12)
    free3 = [(int(a), int(b)) for a, b in zip(iu, ju) if (int(a), int(b)) not in used]
    pick3 = [free3[t] for t in sorted(rng.choice(len(free3), size=q2, replace=False))]
    used |= set(pick3)
    free4 = [(int(a), int(b)) for a, b in zip(iu, ju) if (int(a), int(b)) not in used]
    pick4 = [free4[t] for t in sorted(rng.choice(len(free4), size=n4, replace=False))]
    removed3 = set(step3.removed)
    assign = {}
    for e in step2.removed:
        assign[e] = ((1,), O1[e])
    for e in step2.added:
        assign[e] = ((2,), step2.matrix[e])
    for e in shared12:
        assign[e] = (((1, 2) if e in removed3 else (1, 2, 3)), O1[e])
    for v, e in zip(_signal(rng, len(pick3)), pick3):
        assign[e] = ((3,), v)
    for v, e in zip(_signal(rng, len(pick4)), pick4):
        assign[e] = ((4,), v)
    return _finish(spec, _theta_from_assignments(spec, p, assign), p)


def gen_random_shared(p, sparsity, shared_fraction, K, rng):
    """Random patterns: each group has density ``1 - sparsity``, of which
    ``shared_fraction`` is common to all groups and the rest unique.

    Unique supports are pairwise disjoint and disjoint from the shared one.
    """
    if not 0 < sparsity < 1:
        raise ValueError("sparsity must be in (0, 1)")
    if not 0 <= shared_fraction <= 1:
        raise ValueError("shared_fraction must be in [0, 1]")
    E = n_edges(p)
    per_group = int(round((1 - sparsity) * E))
    n_shared = int(round(shared_fraction * per_group))
    n_unique = per_group - n_shared
    need = n_shared + (K * n_unique if K > 1 else n_unique)
    if need > E:
        raise ValueError("design too dense for the requested sparsity")
    full = tuple(range(1, K + 1))
    comps = [(k,) for k in range(1, K + 1)]
    if K > 1:
        comps.append(full)
    spec = ModelSpec(K, tuple(comps))
    order = rng.permutation(E)
    theta = ThetaState.empty(p)
    pos = 0
    if K > 1 and n_shared:
        sel = order[pos:pos + n_shared]
        theta.component[sel] = spec.index(full)
        theta.value[sel] = _signal(rng, n_shared)
        pos += n_shared
    elif K == 1:
        n_unique = per_group
    for k in range(1, K + 1):
        sel = order[pos:pos + n_unique]
        theta.component[sel] = spec.index((k,))
        theta.value[sel] = _signal(rng, n_unique)
        pos += n_unique
    return _finish(spec, theta, p)


BLOCK_K6_COMPONENTS = ((1, 2), (3, 4), (5, 6), (1, 3, 5), (2, 4, 6))


def gen_block_k6(p, rng, density=0.08):
    """Six groups: three column networks outside the bottom-right block,
    two block networks inside it.

    Groups ``{1,2}``, ``{3,4}``, ``{5,6}`` share a pattern outside the
    ``p/2 x p/2`` bottom-right block; groups ``{1,3,5}`` and ``{2,4,6}``
    share the pattern inside it.  Each network has the given density on
    its region, so every group has overall density close to ``density``.
    """
    if p % 2:
        raise ValueError("block_k6 design needs an even p")
    if p < 8:
        raise ValueError("block_k6 design needs p >= 8")
    h = p // 2
    iu, ju = edge_index(p)
    inside = (iu >= h) & (ju >= h)
    in_ids, out_ids = np.flatnonzero(inside), np.flatnonzero(~inside)
    spec = ModelSpec(6, tuple((k,) for k in range(1, 7)) + BLOCK_K6_COMPONENTS)
    theta = ThetaState.empty(p)
    n_out = int(round(density * out_ids.size))
    n_in = int(round(density * in_ids.size))
    # disjoint supports keep one category per edge
    out_perm = rng.permutation(out_ids)
    for t, comp in enumerate(((1, 2), (3, 4), (5, 6))):
        sel = out_perm[t * n_out:(t + 1) * n_out]
        theta.component[sel] = spec.index(comp)
        theta.value[sel] = _signal(rng, sel.size)
    in_perm = rng.permutation(in_ids)
    for t, comp in enumerate(((1, 3, 5), (2, 4, 6))):
        sel = in_perm[t * n_in:(t + 1) * n_in]
        theta.component[sel] = spec.index(comp)
        theta.value[sel] = _signal(rng, sel.size)
    return _finish(spec, theta, p)


def sample_groups(truth, n_per_group, rng):
    """Draw ``n_k`` rows per group from ``N(0, Omega_k^{-1})``."""
    K = truth.K
    ns = np.broadcast_to(np.asarray(n_per_group, dtype=int), (K,))
    out = []
    for k in range(K):
        Om = truth.omegas[k]
        try:
            L = np.linalg.cholesky(Om)
        except np.linalg.LinAlgError:
            raise ValueError(f"group {k + 1} precision matrix is not positive definite") from None
        Z = rng.standard_normal((ns[k], truth.p))
        # rows y with Cov = (L L')^{-1}: solve L' y = z
        out.append(np.linalg.solve(L.T, Z.T).T)
    return out


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Metrics:
    TP: int
    TN: int
    FP: int
    FN: int

    @property
    def SP(self):
        d = self.TN + self.FP
        return self.TN / d if d else 1.0

    @property
    def SE(self):
        d = self.TP + self.FN
        return self.TP / d if d else 1.0

    @property
    def MCC(self):
        return mcc(self.TP, self.TN, self.FP, self.FN)


def mcc(TP, TN, FP, FN):
    den = (TP + FP) * (TP + FN) * (TN + FP) * (TN + FN)
    if den == 0:
        return 0.0
    return (TP * TN - FP * FN) / math.sqrt(den)


def confusion(selected, truth):
    sel = np.asarray(selected, dtype=bool)
    tru = np.asarray(truth, dtype=bool)
    if sel.shape != tru.shape:
        raise ValueError("selected and true edge vectors differ in shape")
    return Metrics(TP=int(np.sum(sel & tru)), TN=int(np.sum(~sel & ~tru)),
                   FP=int(np.sum(sel & ~tru)), FN=int(np.sum(~sel & tru)))


def edges_of(components, spec, target):
    """Present-edge mask of a target given per-edge selected components.

    ``target`` is ``("omega", k)`` for group ``k`` or ``("psi", subset)``.
    """
    comp = np.asarray(components)
    present = comp >= 0
    kind, what = target
    out = np.zeros(comp.shape, dtype=bool)
    if kind == "omega":
        out[present] = spec.membership[comp[present], what - 1]
    elif kind == "psi":
        key = tuple(sorted(what))
        if key in spec.components:
            out = comp == spec.index(key)
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    return out


def score(selected_components, selected_spec, truth, target):
    """Edge-recovery metrics of one target matrix.

    ``selected_components`` is the per-edge selected component index under
    ``selected_spec`` (-1 for absent).  A ``("psi", r)`` target that one of
    the specs lacks is treated as empty on that side.
    """
    sel = edges_of(selected_components, selected_spec, target)
    tru = edges_of(truth.theta.component, truth.spec, target)
    return confusion(sel, tru)


def score_targets(spec_est, truth):
    """Targets scored in summary tables: every group, then every component
    present in either family, in canonical order."""
    K = truth.K
    fam = set(spec_est.components) | set(truth.spec.components)
    comps = [c for c in ModelSpec(K, tuple(fam)).components]
    return [("omega", k) for k in range(1, K + 1)] + [("psi", c) for c in comps]
