"""Counterfactual adverse drug event estimation.

Thin Python layer over the C++ core: synthetic cohorts, T-learner fitting,
PC_low scores, agreement metrics and the file-based pipeline stages.
"""

from ._core import (
    Cohort,
    DgpConfig,
    EffectEstimate,
    EstimationError,
    SyntheticCohort,
    TLearner,
    ValidationError,
    auc,
    dichotomize_label,
    fit_tlearner,
    generate_cohort,
    map_expert_label,
    mse,
    pc_low,
    pearson,
    percentile_ci,
    ppv,
    run_stage,
)

__all__ = [
    "Cohort",
    "DgpConfig",
    "EffectEstimate",
    "EstimationError",
    "SyntheticCohort",
    "TLearner",
    "ValidationError",
    "auc",
    "dichotomize_label",
    "fit_tlearner",
    "generate_cohort",
    "map_expert_label",
    "mse",
    "pc_low",
    "pearson",
    "percentile_ci",
    "ppv",
    "run_stage",
]
