"""Joint estimation of sparse precision matrices across groups.

Each group's precision matrix is a sum of components shared by subsets
of groups; a Gibbs sampler under a spike prior selects, for every edge,
which single component (if any) carries it.
"""
from .gibbs import ChainConfig, NumericError, PriorConfig, ShrinkageHyper, run_chain
from .inference import FitResult, SelectionTrace, fit, majority_vote, summarize
from .model import DiagState, ModelSpec, SpecError, ThetaState, assemble_omega
from .screening import ScreenReport, iterative_reduce, pairwise_screen, prune_components
from .stats import GroupStats, QuadFormCache, compute_group_stats

__all__ = [
    "ChainConfig", "NumericError", "PriorConfig", "ShrinkageHyper", "run_chain",
    "FitResult", "SelectionTrace", "fit", "majority_vote", "summarize",
    "DiagState", "ModelSpec", "SpecError", "ThetaState", "assemble_omega",
    "ScreenReport", "iterative_reduce", "pairwise_screen", "prune_components",
    "GroupStats", "QuadFormCache", "compute_group_stats",
]
__version__ = "0.1.0"
