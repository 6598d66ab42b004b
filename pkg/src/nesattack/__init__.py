"""Black-box adversarial attacks by learning a search distribution over the l_p ball."""
from .baselines import AblationFlags, ql_step, run_ablation, run_ql
from .geometry import NormBudget, clip_l2, clip_linf, project_to_S, squash, unsquash, upsample
from .init import fit_regression_initializer, init_from_input
from .loss import cw_loss, is_adversarial, neg_prob_loss
from .nattack import AttackConfig, AttackOutcome, DistParams, nattack_step, run_nattack, smoothed_objective, zscore

__all__ = [
    "AblationFlags", "AttackConfig", "AttackOutcome", "DistParams", "NormBudget",
    "clip_l2", "clip_linf", "cw_loss", "fit_regression_initializer", "init_from_input",
    "is_adversarial", "nattack_step", "neg_prob_loss", "project_to_S", "ql_step",
    "run_ablation", "run_nattack", "run_ql", "smoothed_objective", "squash", "unsquash",
    "upsample", "zscore",
]
