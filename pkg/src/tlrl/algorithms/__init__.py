"""Batch sampling, gradient estimators and the four tensor low-rank trainers."""

from .batch import (
    TrajectoryBatch,
    advantages,
    check_compatible,
    returns_to_go,
    sample_batch,
    write_trajectories_csv,
)
from .estimators import (
    ac_gradient,
    fim_dense,
    fim_vector_product,
    gradient_mapping_norm,
    pg_gradient,
    ppo_clip,
    ppo_gradient,
    ppo_mask,
    ppo_objective,
    project_box,
    ratios,
    surrogate,
    trpo_gradient,
)
from .trainers import (
    ALGORITHMS,
    TrainerConfig,
    TrainingAborted,
    TrainingLog,
    TrainResult,
    ptlrpo_train,
    tlrac_train,
    tlrpg_train,
    train,
    trtlrpo_train,
)
from .trust_region import StepInfo, conjugate_gradient, trpo_step

__all__ = [
    "TrajectoryBatch", "advantages", "check_compatible", "returns_to_go", "sample_batch",
    "write_trajectories_csv", "ac_gradient", "fim_dense", "fim_vector_product",
    "gradient_mapping_norm", "pg_gradient", "ppo_clip", "ppo_gradient", "ppo_mask",
    "ppo_objective", "project_box", "ratios", "surrogate", "trpo_gradient", "ALGORITHMS",
    "TrainerConfig", "TrainingAborted", "TrainingLog", "TrainResult", "ptlrpo_train",
    "tlrac_train", "tlrpg_train", "train", "trtlrpo_train", "StepInfo", "conjugate_gradient",
    "trpo_step",
]
