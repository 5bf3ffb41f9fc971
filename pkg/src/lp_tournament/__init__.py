"""Median-of-means tournaments for learning bounded subsets of L_p."""

__version__ = "0.1.0"

from .model import (
    ConstructionError,
    FunctionTable,
    GenerativeSource,
    HypothesisClass,
    LinearFunction,
    TabularSpace,
    TargetRule,
    Triplet,
    find_fstar,
    midpoint,
    midpoint_closure,
)
from .sampler import BlockPartition, Sample, SignVector, draw_sample, draw_signs, partition
from .tournament import TournamentConfig, TournamentFailure, erm_baseline, run_procedure

__all__ = [
    "BlockPartition",
    "ConstructionError",
    "FunctionTable",
    "GenerativeSource",
    "HypothesisClass",
    "LinearFunction",
    "Sample",
    "SignVector",
    "TabularSpace",
    "TargetRule",
    "TournamentConfig",
    "TournamentFailure",
    "Triplet",
    "draw_sample",
    "draw_signs",
    "erm_baseline",
    "find_fstar",
    "midpoint",
    "midpoint_closure",
    "partition",
    "run_procedure",
]
