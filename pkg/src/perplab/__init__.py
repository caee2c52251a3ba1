"""Discounted perpetuities of random walks: evaluation and limit-theorem experiments."""

from .models import Marginal, PairModel, moments, sample_pair
from .rng import RngState
from .walk import FixedPath, HorizonTooSmall, PathStream, next_step, renewal_count
from .perpetuity import (
    ModelNotCentered,
    NoConvergenceDetected,
    PerpetuityValue,
    TruncationControl,
    evaluate,
    evaluate_grid,
    parts_identity_check,
    slln_estimate,
    truncated_statistic,
)

__all__ = [
    "FixedPath", "HorizonTooSmall", "Marginal", "ModelNotCentered", "NoConvergenceDetected", "PairModel",
    "PathStream", "PerpetuityValue", "RngState", "TruncationControl", "evaluate", "evaluate_grid", "moments",
    "next_step", "parts_identity_check", "renewal_count", "sample_pair", "slln_estimate", "truncated_statistic",
]
