"""Doped structured matrix compression: structured term + extremely sparse
additive term, with the training machinery (sparsity annealing, co-matrix
regularization) and benchmarking tools around it."""

from .doped import (DopedWeight, HybridParts, KroneckerPair, LowRankPair,
                    compression_factor, doped_backward, doped_forward,
                    freeze_for_inference, mac_count_entry, make_doped,
                    size_kp_factors)
from .kron import kp_expand, kp_matvec, kp_matvec_backward, numerical_rank
from .schedules import BcdPolicy, CmrSchedule, PenaltyConfig, PruneSchedule
from .sparse import CsrMatrix, csr_from_dense, csr_matvec, prune_to_sparsity

__all__ = [
    "DopedWeight", "HybridParts", "KroneckerPair", "LowRankPair", "CsrMatrix",
    "compression_factor", "doped_backward", "doped_forward",
    "freeze_for_inference", "mac_count_entry", "make_doped", "size_kp_factors",
    "kp_expand", "kp_matvec", "kp_matvec_backward", "numerical_rank",
    "BcdPolicy", "CmrSchedule", "PenaltyConfig", "PruneSchedule",
    "csr_from_dense", "csr_matvec", "prune_to_sparsity",
]

__version__ = "0.1.0"
