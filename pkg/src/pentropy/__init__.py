"""Sequence entropy along progressions.

Systems (identity, Bernoulli shift, circle rotation, rank-one towers,
Gaussian automorphisms), entropy of partition joins, the tail-max estimate
of the sequence entropy, rank-one Sidon constructions with exact
disjointness checks, and spectral-measure diagnostics.
"""

__version__ = "0.1.0"

from .engine import cpe_probe, h_j, h_P, h_P_sup, partition_family
from .partition import (
    LabelDistribution,
    Partition,
    entropy,
    exact_join_distribution,
    sampled_join_distribution,
)
from .psequence import ProgressionSequence, materialize, vanishing_sequence_search

__all__ = [
    "__version__",
    "LabelDistribution",
    "Partition",
    "ProgressionSequence",
    "cpe_probe",
    "entropy",
    "exact_join_distribution",
    "h_P",
    "h_P_sup",
    "h_j",
    "materialize",
    "partition_family",
    "sampled_join_distribution",
    "vanishing_sequence_search",
]
