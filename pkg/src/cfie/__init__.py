"""Evaluate type-based forward-edge CFI policies on source-level and binary-level views."""

__version__ = "0.1.0"

from .types import PolicyId, parse_type, format_type, relaxed_width, type_equal_ifcc, type_equal_mcfi
from .ingest import (
    CallSiteSignature,
    FunctionSignature,
    MatchedProgram,
    ProgramView,
    link_views,
    load_view,
    parse_view,
    serialize_view,
)
from .policies import TargetMap, TargetSetEstimator, naive_target_sets, target_sets
from .metrics import cdf_series, ctr_stats, normalized_ctr, relative_ctr, zero_target_counts
from .accuracy import all_tables
from .perturb import PerturbConfig, ViewPerturber, perturb_view
from .datasets import make_random_view
