"""Component-subset algebra and parameter containers.

Each precision matrix is the sum of the component matrices whose group
subset contains that group.  Off-diagonal parameters are stored per edge
as a single (component, value) pair, which enforces that at most one
component carries a nonzero value for any edge.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

MAX_FULL_K = 12
ABSENT = -1


def _canonical_key(subset):
    # cardinality descending, then reverse-lexicographic
    return (-len(subset), tuple(-x for x in subset))


def _canonical_sort(subsets):
    return sorted(subsets, key=_canonical_key)


def enumerate_full_components(K):
    """All nonempty subsets of ``{1..K}`` in canonical order.

    Canonical order is cardinality-descending and reverse-lexicographic
    within a cardinality, e.g. for ``K=3``::

        (1,2,3), (2,3), (1,3), (1,2), (3,), (2,), (1,)
    """
    if not isinstance(K, (int, np.integer)) or not 1 <= K <= MAX_FULL_K:
        raise ValueError(f"K must be an integer in [1, {MAX_FULL_K}], got {K!r}")
    subsets = []
    for size in range(K, 0, -1):
        subsets.extend(itertools.combinations(range(1, K + 1), size))
    return _canonical_sort(subsets)


class SpecError(ValueError):
    """Raised when a component family violates the model invariants."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def validate_spec(K, components):
    """Return a list of problems with a component family (empty if valid)."""
    problems = []
    seen = set()
    for comp in components:
        comp = tuple(comp)
        if len(comp) == 0:
            problems.append("empty component")
            continue
        bad = [x for x in comp if not (isinstance(x, (int, np.integer)) and 1 <= x <= K)]
        if bad:
            problems.append(f"component {set(comp)} not a subset of {{1..{K}}}")
            continue
        if len(set(comp)) != len(comp):
            problems.append(f"component {set(comp)} has repeated groups")
            continue
        key = tuple(sorted(comp))
        if key in seen:
            problems.append(f"duplicate component {set(key)}")
        seen.add(key)
    for k in range(1, K + 1):
        if (k,) not in seen:
            problems.append(f"missing singleton {{{k}}}")
    return problems


@dataclass(frozen=True)
class ModelSpec:
    """A family of group subsets defining the decomposition.

    Parameters
    ----------
    K : int
        Number of groups.
    components : tuple of tuple of int
        Group subsets (1-based labels).  Stored sorted within each subset
        and in canonical order across subsets.
    """

    K: int
    components: tuple
    membership: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = [tuple(sorted(int(x) for x in c)) for c in self.components]
        problems = validate_spec(int(self.K), comps)
        if problems:
            raise SpecError(problems)
        comps = tuple(_canonical_sort(comps))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "components", comps)
        member = np.zeros((len(comps), self.K), dtype=np.bool_)
        for l, comp in enumerate(comps):
            member[l, [k - 1 for k in comp]] = True
        member.setflags(write=False)
        object.__setattr__(self, "membership", member)

    @classmethod
    def full(cls, K):
        return cls(K, tuple(enumerate_full_components(K)))

    @property
    def n_components(self):
        return len(self.components)

    def index(self, subset):
        """Position of ``subset`` in ``components``."""
        return self.components.index(tuple(sorted(subset)))

    def components_containing(self, k):
        """Indices of components containing group ``k`` (1-based)."""
        if not 1 <= k <= self.K:
            raise ValueError(f"group index {k} out of range 1..{self.K}")
        return [l for l, comp in enumerate(self.components) if k in comp]

    def label(self, l):
        return "".join(str(x) for x in self.components[l]) if self.K < 10 else \
            "-".join(str(x) for x in self.components[l])

    def to_dict(self):
        return {"K": self.K, "components": [list(c) for c in self.components]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["K"]), tuple(tuple(c) for c in d["components"]))


def components_containing(spec, k):
    return spec.components_containing(k)


def n_edges(p):
    return p * (p - 1) // 2


def edge_index(p):
    """Row-major upper-triangle edge coordinates ``(i, j)``, ``i < j``, 0-based."""
    return np.triu_indices(p, k=1)


@dataclass
class ThetaState:
    """Off-diagonal parameters, one (component, value) pair per edge.

    ``component[e] == -1`` means the edge is absent in every component.
    Edges are in row-major upper-triangle order (12, 13, ..., p-1 p).
    """

    p: int
    component: np.ndarray
    value: np.ndarray

    @classmethod
    def empty(cls, p):
        E = n_edges(p)
        return cls(p, np.full(E, ABSENT, dtype=np.int64), np.zeros(E))

    def copy(self):
        return ThetaState(self.p, self.component.copy(), self.value.copy())

    @property
    def density(self):
        return int(np.count_nonzero(self.component >= 0))

    def check(self):
        """Raise if the identifiability encoding is violated."""
        present = self.component >= 0
        if not np.all(np.isfinite(self.value)):
            raise ValueError("non-finite edge value")
        if np.any(self.value[~present] != 0):
            raise ValueError("absent edge carries a nonzero value")
        if np.any(self.value[present] == 0):
            raise ValueError("active edge has a zero value")

    def theta_vectors(self, n_components):
        """Dense ``(E, L)`` array of per-edge coefficient vectors."""
        out = np.zeros((self.component.size, n_components))
        present = np.flatnonzero(self.component >= 0)
        out[present, self.component[present]] = self.value[present]
        return out

    def component_matrix(self, l):
        """Symmetric matrix of component ``l``'s off-diagonal entries."""
        M = np.zeros((self.p, self.p))
        iu, ju = edge_index(self.p)
        sel = self.component == l
        M[iu[sel], ju[sel]] = self.value[sel]
        return M + M.T


@dataclass
class DiagState:
    """Diagonals of the singleton components, shape ``(K, p)``."""

    diag: np.ndarray

    @classmethod
    def ones(cls, K, p):
        return cls(np.ones((K, p)))

    def copy(self):
        return DiagState(self.diag.copy())


def assemble_omega(theta, delta, spec, k):
    """Precision matrix of group ``k`` (1-based) from its components."""
    if delta.diag.shape != (spec.K, theta.p):
        raise ValueError("diagonal state shape does not match spec")
    iu, ju = edge_index(theta.p)
    comp = theta.component
    in_k = np.zeros(comp.shape, dtype=bool)
    present = comp >= 0
    in_k[present] = spec.membership[comp[present], k - 1]
    Om = np.zeros((theta.p, theta.p))
    Om[iu[in_k], ju[in_k]] = theta.value[in_k]
    Om = Om + Om.T
    Om[np.diag_indices(theta.p)] = delta.diag[k - 1]
    return Om


def assemble_all(theta, delta, spec):
    return np.stack([assemble_omega(theta, delta, spec, k) for k in range(1, spec.K + 1)])
