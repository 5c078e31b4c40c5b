"""Perturbation generators that make graph classification data unlearnable."""
from .budget import DEFAULT_BETA, compute_budget, raw_budget, raw_trigger_size, trigger_size
from .features import PGDConfig, eminf_step, feature_steps, tempered_softmax
from .minmin import (N_STEP_LARGE, N_STEP_MID, CloakJob, CloakResult, emaxs_cloak, emin_min_loop,
                     random_cloak, run_cloak)
from .poison import METHODS, BudgetUsage, CloakError, cost, select_poisoned
from .structure import apply_ranked_flips, emaxs_step, emins_step, random_flips, structural_steps
from .subinj import (SubgraphTrigger, dataset_trigger_size, inject, inject_within_budget,
                     injection_cost, make_triggers, subinj_cloak)

__all__ = [
    "BudgetUsage", "CloakError", "CloakJob", "CloakResult", "DEFAULT_BETA", "METHODS", "N_STEP_LARGE",
    "N_STEP_MID", "PGDConfig", "SubgraphTrigger", "apply_ranked_flips", "compute_budget", "cost",
    "dataset_trigger_size", "emaxs_cloak", "emaxs_step", "emin_min_loop", "eminf_step", "emins_step",
    "feature_steps", "inject", "inject_within_budget", "injection_cost", "make_triggers",
    "random_cloak", "random_flips", "raw_budget", "raw_trigger_size", "run_cloak", "select_poisoned", "structural_steps",
    "subinj_cloak", "tempered_softmax", "trigger_size",
]
