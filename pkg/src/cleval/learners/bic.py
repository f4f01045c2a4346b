"""Bias-corrected distillation replay.

After every expansion task an affine correction (alpha, beta) for the
newest classes' logits is fitted by gradient descent on a held-out split
carved (stratified per class) from the training pool before any training
happens. Inference applies the newest task's correction; older logits
pass through unchanged.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, DivergenceError
from ..nn import forward, softmax
from ..scenario import Task
from ..seeding import derive_seed, rng_from
from .base import EpochEntry, TaskLog
from .simple import DistillReplayLearner

FIT_STEPS = 2500
FIT_LR = 0.2


def bic_correct(
    logits: np.ndarray,
    task_of_class: list[int],
    corrections: dict[int, tuple[float, float]],
) -> np.ndarray:
    """Apply the newest task's (alpha, beta) to that task's columns.

    ``task_of_class[j]`` is the task that introduced class column j;
    ``corrections`` maps task index -> fitted pair. The first task never
    carries a correction.
    """
    if not task_of_class:
        return logits
    newest = max(task_of_class)
    if newest == 0:
        return logits
    if newest not in corrections:
        raise ConfigurationError(f"no bias correction fitted for task {newest}")
    alpha, beta = corrections[newest]
    cols = [j for j, t in enumerate(task_of_class) if t == newest]
    adjusted = logits.copy()
    adjusted[:, cols] = alpha * adjusted[:, cols] + beta
    return adjusted


def fit_bias_correction(
    logits: np.ndarray,
    labels: np.ndarray,
    new_columns: list[int],
    steps: int = FIT_STEPS,
    lr: float = FIT_LR,
) -> tuple[float, float]:
    """Fit (alpha, beta) minimizing cross-entropy of the corrected
    logits by full-batch gradient descent from (1, 0)."""
    n = logits.shape[0]
    cols = np.asarray(new_columns, dtype=np.int64)
    alpha, beta = 1.0, 0.0
    onehot = np.zeros_like(logits)
    onehot[np.arange(n), labels] = 1.0
    for _ in range(steps):
        adjusted = logits.copy()
        adjusted[:, cols] = alpha * adjusted[:, cols] + beta
        err = (softmax(adjusted) - onehot)[:, cols] / n
        grad_alpha = float((err * logits[:, cols]).sum())
        grad_beta = float(err.sum())
        alpha -= lr * grad_alpha
        beta -= lr * grad_beta
    if not (np.isfinite(alpha) and np.isfinite(beta)):
        raise DivergenceError("bias-correction fit became non-finite")
    return alpha, beta


class BiasCorrectionLearner(DistillReplayLearner):
    """Distillation replay with post-hoc affine logit correction for the
    newest classes. Always pools the exemplar store (the held-out carve
    needs every seen class in one place)."""

    algorithm = "bic"
    supports_interleave = False

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
        split_ratio=0.1,
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
            kd_temperature=kd_temperature,
            kd_lambda=kd_lambda,
        )
        self.split_ratio = split_ratio

    def _start_trial(self, input_dim: int, trial_seed: int) -> None:
        super()._start_trial(input_dim, trial_seed)
        self.corrections_: dict[int, tuple[float, float]] = {}
        self.task_of_class_: list[int] = []
        self._heldout = None

    def _begin_task(self, task_index: int, task: Task, trial_seed: int) -> None:
        super()._begin_task(task_index, task, trial_seed)
        self.task_of_class_.extend([task_index] * len(task.class_ids))

    def _carve_heldout(
        self,
        task_index: int,
        features: np.ndarray,
        labels: np.ndarray,
        trial_seed: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        if task_index == 0:
            self._heldout = None
            return features, labels
        rng = rng_from(derive_seed(trial_seed, "bias-split", task_index))
        ratio = float(self.split_ratio)
        held_mask = np.zeros(features.shape[0], dtype=bool)
        for cls in np.unique(labels):
            idx = np.nonzero(labels == cls)[0]
            take = int(np.floor(ratio * idx.size))
            if take == 0:
                raise ConfigurationError(
                    f"split_ratio {ratio} leaves no held-out examples for a "
                    f"class with {idx.size} available"
                )
            held_mask[idx[rng.permutation(idx.size)][:take]] = True
        self._heldout = (features[held_mask], labels[held_mask])
        return features[~held_mask], labels[~held_mask]

    def _post_task(
        self, task_index: int, task: Task, trial_seed: int, log: TaskLog
    ) -> None:
        if task_index > 0:
            held_x, held_y = self._heldout
            logits = forward(self.net_, held_x)
            new_cols = [
                j for j, t in enumerate(self.task_of_class_) if t == task_index
            ]
            alpha, beta = fit_bias_correction(logits, held_y, new_cols)
            self.corrections_[task_index] = (alpha, beta)
            log.entries.append(
                EpochEntry(task_index, 0, FIT_LR, float(alpha + beta), phase="post")
            )
            self._heldout = None
        super()._post_task(task_index, task, trial_seed, log)

    def _adjust_logits(self, logits: np.ndarray) -> np.ndarray:
        return bic_correct(
            logits, self.task_of_class_[: logits.shape[1]], self.corrections_
        )
