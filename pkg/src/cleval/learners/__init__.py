"""Desk-scale class-incremental learners with a uniform estimator
surface. The registry is what the protocol engine consumes: it never
touches a learner class directly."""

from __future__ import annotations

from ..errors import ConfigurationError
from .base import ContinualLearner, FirstTaskParams, LearnerState, TaskLog
from .bic import BiasCorrectionLearner, bic_correct, fit_bias_correction
from .der import ExpansionLearner
from .hparams import REQUIRED, resolve_hyperparams
from .simple import (
    DistillReplayLearner,
    FinetuneLearner,
    ReplayLearner,
    WeightAlignLearner,
    wa_align,
)

LEARNERS: dict[str, type[ContinualLearner]] = {
    cls.algorithm: cls
    for cls in (
        FinetuneLearner,
        ReplayLearner,
        DistillReplayLearner,
        WeightAlignLearner,
        BiasCorrectionLearner,
        ExpansionLearner,
    )
}


def make_learner(
    algorithm: str,
    assignment: dict,
    *,
    hidden_dims=(32, 32),
    memory_capacity: int = 1000,
    init_scale: float = 0.1,
    first_task: FirstTaskParams | None = None,
) -> ContinualLearner:
    """Instantiate a learner from a sampled hyperparameter assignment."""
    if algorithm not in LEARNERS:
        raise ConfigurationError(
            f"unknown algorithm '{algorithm}', expected one of {sorted(LEARNERS)}"
        )
    kwargs = resolve_hyperparams(algorithm, assignment)
    return LEARNERS[algorithm](
        hidden_dims=tuple(hidden_dims),
        memory_capacity=memory_capacity,
        init_scale=init_scale,
        first_task=first_task,
        **kwargs,
    )


__all__ = [
    "LEARNERS",
    "REQUIRED",
    "ContinualLearner",
    "FirstTaskParams",
    "LearnerState",
    "TaskLog",
    "FinetuneLearner",
    "ReplayLearner",
    "DistillReplayLearner",
    "WeightAlignLearner",
    "BiasCorrectionLearner",
    "ExpansionLearner",
    "bic_correct",
    "fit_bias_correction",
    "make_learner",
    "resolve_hyperparams",
    "wa_align",
]
