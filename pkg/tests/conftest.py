import numpy as np
import pytest

from bjns.model import ModelSpec, ThetaState, DiagState, n_edges
from bjns.stats import GroupStats


def random_stats(rng, K, p, n=None):
    """Random positive definite covariances with integer-ish sample sizes."""
    S = []
    for _ in range(K):
        X = rng.standard_normal((p + 3, p))
        S.append(X.T @ X / (p + 3))
    n = np.full(K, 10.0) if n is None else np.broadcast_to(np.asarray(n, float), (K,)).copy()
    return GroupStats(n=n, S=np.stack(S))


def random_state(rng, spec, p, density=0.5):
    E = n_edges(p)
    theta = ThetaState.empty(p)
    on = rng.random(E) < density
    theta.component[on] = rng.integers(0, spec.n_components, on.sum())
    theta.value[on] = rng.uniform(-1, 1, on.sum())
    delta = DiagState(rng.uniform(0.5, 2.0, (spec.K, p)))
    return theta, delta


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
