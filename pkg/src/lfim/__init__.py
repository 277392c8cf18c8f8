"""Likelihood-free inferential models: depth-based contours and calibration checks."""

__version__ = "0.1.0"

from .depth import ConformityMeasure, DegenerateReferenceError, mahalanobis_depth, neg_abs_deviation, tukey_depth
from .engine import (
    Claim,
    ContourTable,
    ParameterGrid,
    belief,
    brute_force_permutation_ranking,
    compute_contour,
    compute_contours,
    level_set,
    marginal_contour,
    plausibility,
    validified_ranking,
)
from .streams import StreamKey, derive_stream

__all__ = [
    "Claim",
    "ConformityMeasure",
    "ContourTable",
    "DegenerateReferenceError",
    "ParameterGrid",
    "StreamKey",
    "belief",
    "brute_force_permutation_ranking",
    "compute_contour",
    "compute_contours",
    "derive_stream",
    "level_set",
    "mahalanobis_depth",
    "marginal_contour",
    "neg_abs_deviation",
    "plausibility",
    "tukey_depth",
    "validified_ranking",
]
