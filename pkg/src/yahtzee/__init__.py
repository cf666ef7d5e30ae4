"""Two-party record linkage through repeated anonymous group assignment.

A registry (holding a behaviour label per person) and a platform (holding user
records) agree on a sequence of salts. Each round both hash the same identity
key, the registry publishes per-group voter counts for groups of exactly ``g``
members, and the platform records the count for each user's group. After
enough rounds a maximum-likelihood classifier labels each user as a matched
voter, matched abstainer or unmatched, without any individual record crossing
between the parties.
"""

from .calibration import (
    AccuracyCurve,
    CalibrationPlan,
    SimulationConfig,
    accuracy_curve,
    calibrate,
    estimate_match_rate,
    evaluate_accuracy,
    simulate_population,
)
from .classifier import (
    ClassificationResult,
    ClassLabel,
    PopulationParams,
    YahtzeeClassifier,
    classify,
    draw_pmf,
    log_likelihoods,
    two_stage_classify,
)
from .draws import DrawStore, RoundPlan, accumulate, assign_draws, plan_rounds
from .grouping import GroupCountTable, GroupParams, build_group_table, group_id, table_stats
from .identity import CanonicalIdentity, RoundSeed, canonicalize_name, deduplicate, identity_hash
from .pipeline import run_protocol
from .validation import (
    TruthTable,
    build_truth_table,
    conditional_probabilities,
    grouped_turnout_report,
    null_accuracy_ci,
)

__all__ = [
    "accumulate",
    "accuracy_curve",
    "AccuracyCurve",
    "assign_draws",
    "build_group_table",
    "build_truth_table",
    "calibrate",
    "CalibrationPlan",
    "CanonicalIdentity",
    "canonicalize_name",
    "ClassificationResult",
    "classify",
    "ClassLabel",
    "conditional_probabilities",
    "deduplicate",
    "draw_pmf",
    "DrawStore",
    "estimate_match_rate",
    "evaluate_accuracy",
    "group_id",
    "GroupCountTable",
    "grouped_turnout_report",
    "GroupParams",
    "identity_hash",
    "log_likelihoods",
    "null_accuracy_ci",
    "plan_rounds",
    "PopulationParams",
    "RoundPlan",
    "RoundSeed",
    "run_protocol",
    "simulate_population",
    "SimulationConfig",
    "table_stats",
    "TruthTable",
    "two_stage_classify",
    "YahtzeeClassifier",
]

__version__ = "0.1.0"
