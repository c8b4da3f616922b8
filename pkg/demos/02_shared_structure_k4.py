# %% [markdown]
# # Four groups with a common core
#
# Half of the edges are common to all four groups and the rest are group
# specific.  The shared component should be recovered more reliably than
# the group-specific ones because it pools all the data.

# %%
import numpy as np

from bjns import ChainConfig, ModelSpec, compute_group_stats, fit
from bjns import synthetic as sy

rng = np.random.default_rng(600)
truth = sy.gen_random_shared(50, 0.95, 0.5, 4, rng)
stats = compute_group_stats(sy.sample_groups(truth, 150, rng))
spec = ModelSpec.full(4)
print(spec.n_components, "components")

# %%
result, trace = fit(stats, spec, ChainConfig(burnin=2000, samples=2000, seed=0))

# %%
for k in range(1, 5):
    m = sy.score(result.component, spec, truth, ("omega", k))
    print(f"Omega{k}: MCC={m.MCC:.3f} SP={m.SP:.3f}")
for r in [(1,), (2,), (3,), (4,), (1, 2, 3, 4)]:
    m = sy.score(result.component, spec, truth, ("psi", r))
    print(f"Psi{r}: MCC={m.MCC:.3f}")
