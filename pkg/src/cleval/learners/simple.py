"""Single-network learners: naive finetuning, exemplar replay, replay
with knowledge distillation (the iCaRL-style reduction: cross-entropy +
KD on exemplar-augmented batches, softmax classification), and replay +
KD with weight alignment of the new-class head vectors."""

from __future__ import annotations

import logging

import numpy as np

from ..nn import LossConfig
from ..scenario import Task
from .base import ContinualLearner, TaskLog

logger = logging.getLogger(__name__)


def wa_align(
    head_weights: np.ndarray, old_classes: list[int], new_classes: list[int]
) -> np.ndarray:
    """Rescale new-class weight vectors so their mean L2 norm matches the
    old-class mean norm. Head weights are (features, classes); the ids
    index columns. Old vectors are untouched.
    """
    if not old_classes or not new_classes:
        raise ValueError("weight alignment needs nonempty old and new class sets")
    old_norms = np.linalg.norm(head_weights[:, old_classes], axis=0)
    new_norms = np.linalg.norm(head_weights[:, new_classes], axis=0)
    new_mean = float(new_norms.mean())
    if new_mean == 0.0:
        logger.warning("new-class head vectors all zero; skipping alignment")
        return head_weights
    aligned = head_weights.copy()
    aligned[:, new_classes] *= float(old_norms.mean()) / new_mean
    return aligned


class FinetuneLearner(ContinualLearner):
    """Trains on each task's data alone; the catastrophic-forgetting
    baseline."""

    algorithm = "finetune"
    uses_memory = False


class ReplayLearner(ContinualLearner):
    """Finetuning over the current task pooled with the exemplar store."""

    algorithm = "replay"


class DistillReplayLearner(ReplayLearner):
    """Replay plus a temperature-scaled distillation pull toward the
    model snapshot taken after the previous task.

    With kd_lambda == 0 the distillation branch is skipped entirely, so
    runs are bit-identical to plain replay under equal seeds.
    """

    algorithm = "icarl"

    def __init__(
        self,
        epochs=10,
        lr=0.1,
        scheduler="cosine",
        num_milestones=3,
        lr_decay=0.1,
        batch_size=32,
        weight_decay=0.0005,
        exemplar_batch_size=None,
        hidden_dims=(32, 32),
        memory_capacity=1000,
        init_scale=0.1,
        first_task=None,
        kd_temperature=2.0,
        kd_lambda=1.0,
    ):
        super().__init__(
            epochs=epochs,
            lr=lr,
            scheduler=scheduler,
            num_milestones=num_milestones,
            lr_decay=lr_decay,
            batch_size=batch_size,
            weight_decay=weight_decay,
            exemplar_batch_size=exemplar_batch_size,
            hidden_dims=hidden_dims,
            memory_capacity=memory_capacity,
            init_scale=init_scale,
            first_task=first_task,
        )
        self.kd_temperature = kd_temperature
        self.kd_lambda = kd_lambda

    def _start_trial(self, input_dim: int, trial_seed: int) -> None:
        super()._start_trial(input_dim, trial_seed)
        self.teacher_ = None

    def _loss_config(self, task_index: int, weight_decay: float) -> LossConfig:
        if task_index == 0 or self.teacher_ is None:
            return LossConfig(weight_decay=weight_decay)
        return LossConfig(
            weight_decay=weight_decay,
            kd_teacher=self.teacher_,
            kd_temperature=float(self.kd_temperature),
            kd_lambda=float(self.kd_lambda),
        )

    def _post_task(
        self, task_index: int, task: Task, trial_seed: int, log: TaskLog
    ) -> None:
        self.teacher_ = self.net_.clone()


class WeightAlignLearner(DistillReplayLearner):
    """Distillation replay that, after every expansion task, rescales the
    new-class head vectors to the old-class mean norm before snapshotting
    the teacher."""

    algorithm = "wa"

    def _post_task(
        self, task_index: int, task: Task, trial_seed: int, log: TaskLog
    ) -> None:
        if task_index > 0:
            new_count = len(task.class_ids)
            total = len(self.state_.classes_seen)
            old_idx = list(range(total - new_count))
            new_idx = list(range(total - new_count, total))
            self.net_.weights[-1] = wa_align(self.net_.weights[-1], old_idx, new_idx)
        super()._post_task(task_index, task, trial_seed, log)
