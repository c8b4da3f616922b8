# %% [markdown]
# # Screening six groups
#
# Six groups give 63 possible components.  Pairwise fits find which pairs
# of groups share little structure; every subset containing such a pair
# is dropped before the joint fit.

# %%
import numpy as np

from bjns import ChainConfig, compute_group_stats, iterative_reduce
from bjns import synthetic as sy

rng = np.random.default_rng(700)
truth = sy.gen_block_k6(40, rng)
stats = compute_group_stats(sy.sample_groups(truth, 200, rng))
print("true family:", truth.spec.components)

# %%
out = iterative_reduce(stats, ChainConfig(seed=0), max_rounds=3, jobs=4)
for e in out.report.stage("pairwise"):
    print(e.component, e.edge_count, "active" if e.active else "inactive")

# %%
print("weak pairs:", out.report.inactive_pairs())
print("final family:", out.spec.components)
print("matches truth:", set(out.spec.components) == set(truth.spec.components))

# %% [markdown]
# ``report.barplot_csv()`` gives the per-stage edge counts for plotting.

# %%
print(out.report.barplot_csv()[:400])
