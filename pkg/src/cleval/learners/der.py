"""Expansion-based learner: one frozen feature column per task.

Each task appends a fresh feature-extractor column with the same hidden
architecture, freezes every earlier column, and replaces the unified
head with a new one over the concatenated column features. During
training an auxiliary head over the new column separates the new classes
from a single "old" bucket, weighted by aux_lambda; it is dropped once
the task ends, so live parameters are exactly columns + unified head.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation, DivergenceError
from ..nn import (
    backward_from_logits,
    cross_entropy,
    forward,
    forward_cached,
    init_mlp,
    lr_at,
)
from ..scenario import Task
from ..seeding import derive_seed, rng_from
from .base import ContinualLearner, EpochEntry, TaskLog


def _init_linear(fan_in: int, fan_out: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng_from(seed).uniform(-bound, bound, size=(fan_in, fan_out))
    return w, np.zeros(fan_out)


class ExpansionLearner(ContinualLearner):
    algorithm = "der"
    supports_interleave = False  # expansion training always pools

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
        aux_lambda=1.0,
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
        self.aux_lambda = aux_lambda

    @property
    def feature_dim(self) -> int:
        return int(self.hidden_dims[-1])

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def _init_model(self, trial_seed: int) -> None:
        self.columns_: list = []
        self.head_w_ = np.zeros((0, 0))
        self.head_b_ = np.zeros(0)

    def _begin_task(self, task_index: int, task: Task, trial_seed: int) -> None:
        overlap = set(task.class_ids) & set(self.state_.classes_seen)
        if overlap:
            raise ContractViolation(f"classes {sorted(overlap)} already trained")
        new_classes = len(task.class_ids)
        self.state_.classes_seen.extend(int(c) for c in task.class_ids)
        column = init_mlp(
            [self.input_dim_, *self.hidden_dims],
            derive_seed(trial_seed, "column", task_index),
        )
        self.columns_.append(column)
        total = len(self.state_.classes_seen)
        self.head_w_, self.head_b_ = _init_linear(
            len(self.columns_) * self.feature_dim,
            total,
            derive_seed(trial_seed, "unified-head", task_index),
        )
        if task_index > 0:
            self._aux_w, self._aux_b = _init_linear(
                self.feature_dim,
                new_classes + 1,
                derive_seed(trial_seed, "aux-head", task_index),
            )
        else:
            self._aux_w = self._aux_b = None
        self._new_class_ids = tuple(int(c) for c in task.class_ids)

    def _fit_task(
        self,
        task_index: int,
        task: Task,
        features: np.ndarray,
        labels: np.ndarray,
        trial_seed: int,
        log: TaskLog,
    ) -> None:
        schedule, weight_decay = self._resolve_schedule(task_index)
        pool_x, pool_labels = self._pool_with_memory(features, labels)
        pool_y = self._head_index(pool_labels)
        aux_y = self._aux_targets(pool_labels)
        frozen_feats = self._frozen_features(pool_x)

        batch = int(self.batch_size)
        for epoch in range(schedule.epochs):
            lr = lr_at(schedule, epoch)
            rng = rng_from(derive_seed(trial_seed, "epoch", task_index, epoch))
            order = rng.permutation(pool_x.shape[0])
            losses = []
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                for start in range(0, pool_x.shape[0], batch):
                    idx = order[start : start + batch]
                    loss = self._train_batch(
                        pool_x[idx],
                        pool_y[idx],
                        aux_y[idx] if aux_y is not None else None,
                        frozen_feats[idx],
                        lr,
                        weight_decay,
                    )
                    losses.append(loss)
            log.entries.append(
                EpochEntry(task_index, epoch, lr, float(np.mean(losses)))
            )

    def _post_task(
        self, task_index: int, task: Task, trial_seed: int, log: TaskLog
    ) -> None:
        # the auxiliary head is training-only scaffolding
        self._aux_w = self._aux_b = None

    # ------------------------------------------------------------------
    # composite forward / backward
    # ------------------------------------------------------------------

    def _pool_with_memory(
        self, features: np.ndarray, labels: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        if self.memory_.is_empty():
            return features, labels
        mem_x, mem_y = self.memory_.as_arrays()
        return np.concatenate([features, mem_x]), np.concatenate([labels, mem_y])

    def _aux_targets(self, labels: np.ndarray) -> np.ndarray | None:
        """Index within the new task's classes, or the trailing "old"
        bucket for replayed examples."""
        if self._aux_w is None:
            return None
        position = {c: i for i, c in enumerate(self._new_class_ids)}
        old_bucket = len(self._new_class_ids)
        return np.asarray(
            [position.get(int(c), old_bucket) for c in labels], dtype=np.int64
        )

    def _frozen_features(self, features: np.ndarray) -> np.ndarray:
        if len(self.columns_) == 1:
            return np.zeros((features.shape[0], 0))
        return np.concatenate(
            [forward(col, features) for col in self.columns_[:-1]], axis=1
        )

    def _train_batch(
        self,
        xb: np.ndarray,
        yb: np.ndarray,
        aux_yb: np.ndarray | None,
        frozen_b: np.ndarray,
        lr: float,
        weight_decay: float,
    ) -> float:
        column = self.columns_[-1]
        new_feats, caches = forward_cached(column, xb)
        feats = np.concatenate([frozen_b, new_feats], axis=1)
        logits = feats @ self.head_w_ + self.head_b_

        loss, d_logits = cross_entropy(logits, yb)
        d_head_w = feats.T @ d_logits + weight_decay * self.head_w_
        d_head_b = d_logits.sum(axis=0)
        d_new = (d_logits @ self.head_w_.T)[:, frozen_b.shape[1] :]

        d_aux_w = d_aux_b = None
        if aux_yb is not None:
            lam = float(self.aux_lambda)
            aux_logits = new_feats @ self._aux_w + self._aux_b
            aux_loss, d_aux_logits = cross_entropy(aux_logits, aux_yb)
            loss += lam * aux_loss
            d_aux_logits = lam * d_aux_logits
            d_aux_w = new_feats.T @ d_aux_logits + weight_decay * self._aux_w
            d_aux_b = d_aux_logits.sum(axis=0)
            d_new = d_new + d_aux_logits @ self._aux_w.T

        loss += 0.5 * weight_decay * (
            float((self.head_w_ ** 2).sum())
            + sum(float((w * w).sum()) for w in column.weights)
            + (float((self._aux_w ** 2).sum()) if aux_yb is not None else 0.0)
        )
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became {loss}")

        col_grads, _ = backward_from_logits(column, caches, d_new, weight_decay)
        for i in range(len(column.weights)):
            column.weights[i] = column.weights[i] - lr * col_grads.weights[i]
            column.biases[i] = column.biases[i] - lr * col_grads.biases[i]
        self.head_w_ = self.head_w_ - lr * d_head_w
        self.head_b_ = self.head_b_ - lr * d_head_b
        if aux_yb is not None:
            self._aux_w = self._aux_w - lr * d_aux_w
            self._aux_b = self._aux_b - lr * d_aux_b
        return loss

    # ------------------------------------------------------------------
    # inference / accounting
    # ------------------------------------------------------------------

    def _forward_eval(self, features: np.ndarray) -> np.ndarray:
        feats = np.concatenate([forward(col, features) for col in self.columns_], axis=1)
        return feats @ self.head_w_ + self.head_b_

    def param_count(self) -> int:
        return (
            sum(col.count() for col in self.columns_)
            + self.head_w_.size
            + self.head_b_.size
        )
