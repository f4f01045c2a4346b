"""Shared machinery for the desk-scale class-incremental learners.

Every learner is a scikit-learn style estimator: hyperparameters go in
the constructor (so ``get_params`` / ``set_params`` work), mutable
training state lives in trailing-underscore attributes created by
``train_task``. The uniform surface the protocol engine relies on is:

    learner.train_task(task_index, task, trial_seed) -> TaskLog
    learner.evaluate_upto(val_sets) -> Acc_t
    learner.predict(X) -> class ids
    learner.param_count(), learner.training_seconds(), learner.state_

Divergence (non-finite loss) flips ``state_.status`` to "diverged",
which is absorbing: further training calls violate the contract.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_X_y

from ..errors import ContractViolation, DivergenceError
from ..metrics import accuracy
from ..nn import (
    LossConfig,
    MlpParams,
    Schedule,
    forward,
    init_mlp,
    loss_and_grad,
    lr_at,
    sgd_epoch,
    sgd_step,
)
from ..scenario import ExemplarMemory, Task, rebuild_exemplar_memory
from ..seeding import derive_seed, rng_from


@dataclass(frozen=True)
class FirstTaskParams:
    """Fixed hyperparameters for training the first task (every learner
    shares them); epochs and milestones are scaled by the learner's
    init_scale so desk-scale runs stay small. Milestones only apply when
    the sampled scheduler is step-wise."""

    epochs: int = 200
    lr: float = 0.1
    milestones: tuple[int, ...] = (60, 120, 170)
    lr_decay: float = 0.1
    weight_decay: float = 0.0005

    @classmethod
    def from_dict(cls, payload: dict | None) -> "FirstTaskParams":
        if payload is None:
            return cls()
        return cls(
            epochs=int(payload.get("epochs", cls.epochs)),
            lr=float(payload.get("lr", cls.lr)),
            milestones=tuple(payload.get("milestones", cls.milestones)),
            lr_decay=float(payload.get("lr_decay", cls.lr_decay)),
            weight_decay=float(payload.get("weight_decay", cls.weight_decay)),
        )


DEFAULT_FIRST_TASK = FirstTaskParams()


@dataclass
class EpochEntry:
    task: int
    epoch: int
    lr: float
    mean_loss: float
    phase: str = "train"  # "train" | "post"


@dataclass
class TaskLog:
    task: int
    entries: list[EpochEntry] = field(default_factory=list)
    diverged: bool = False


@dataclass
class LearnerState:
    """Bookkeeping half of a learner's per-trial state (the model
    parameters live on the estimator as fitted attributes)."""

    algorithm: str
    status: str = "healthy"  # "healthy" | "diverged"
    diverged_task: int | None = None
    tasks_trained: int = 0
    classes_seen: list[int] = field(default_factory=list)
    param_counts: list[int] = field(default_factory=list)
    seconds_train: float = 0.0
    seconds_post: float = 0.0


def spaced_milestones(count: int, epochs: int) -> tuple[int, ...]:
    """``count`` milestones spread evenly across the epoch range."""
    raw = sorted({epochs * (i + 1) // (count + 1) for i in range(count)})
    return tuple(m for m in raw if m < epochs)


def scale_epochs(epochs: int, scale: float) -> int:
    return max(1, round(epochs * scale))


class ContinualLearner(BaseEstimator):
    """Base class; subclasses choose the training pool, the loss extras
    and any post-training step."""

    algorithm: ClassVar[str] = "base"
    uses_memory: ClassVar[bool] = True
    supports_interleave: ClassVar[bool] = True

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
    ):
        self.epochs = epochs
        self.lr = lr
        self.scheduler = scheduler
        self.num_milestones = num_milestones
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.exemplar_batch_size = exemplar_batch_size
        self.hidden_dims = hidden_dims
        self.memory_capacity = memory_capacity
        self.init_scale = init_scale
        self.first_task = first_task

    # ------------------------------------------------------------------
    # uniform interface
    # ------------------------------------------------------------------

    def train_task(self, task_index: int, task: Task, trial_seed: int) -> TaskLog:
        state = getattr(self, "state_", None)
        if state is not None and state.status == "diverged":
            raise ContractViolation("learner has diverged; no further training")
        expected = 0 if state is None else state.tasks_trained
        if task_index != expected:
            raise ContractViolation(
                f"task_index {task_index} is not the next unseen task ({expected})"
            )
        features, labels = check_X_y(task.train.features, task.train.labels)

        started = time.monotonic()
        if task_index == 0:
            self._start_trial(features.shape[1], trial_seed)
        self._begin_task(task_index, task, trial_seed)

        log = TaskLog(task=task_index)
        try:
            self._fit_task(task_index, task, features, labels, trial_seed, log)
        except DivergenceError:
            return self._mark_diverged(task_index, log, started)
        self.state_.seconds_train += time.monotonic() - started

        post_started = time.monotonic()
        try:
            self._post_task(task_index, task, trial_seed, log)
        except DivergenceError:
            self.state_.seconds_post += time.monotonic() - post_started
            self.state_.status = "diverged"
            self.state_.diverged_task = task_index
            log.diverged = True
            self.logs_.append(log)
            return log
        self.state_.seconds_post += time.monotonic() - post_started

        if self.uses_memory:
            self.memory_ = rebuild_exemplar_memory(
                self.memory_, task.train, derive_seed(trial_seed, "memory", task_index)
            )
        self.state_.tasks_trained += 1
        self.state_.param_counts.append(self.param_count())
        self.logs_.append(log)
        return log

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = check_array(features)
        logits = self._adjust_logits(self._forward_eval(features))
        return np.asarray(self.state_.classes_seen)[logits.argmax(axis=1)]

    def evaluate_upto(self, val_sets) -> float:
        """Acc_t: top-1 accuracy over the concatenated validation data of
        tasks 1..t, classifying among all classes seen so far."""
        if len(val_sets) > self.state_.tasks_trained:
            raise ContractViolation(
                f"asked for {len(val_sets)} tasks, trained {self.state_.tasks_trained}"
            )
        features = np.concatenate([v.features for v in val_sets])
        labels = np.concatenate([v.labels for v in val_sets])
        return accuracy(list(self.predict(features)), list(labels))

    def param_count(self) -> int:
        return self.net_.count()

    def training_seconds(self) -> float:
        state = getattr(self, "state_", None)
        if state is None:
            return 0.0
        return state.seconds_train + state.seconds_post

    # ------------------------------------------------------------------
    # trial lifecycle hooks
    # ------------------------------------------------------------------

    def _start_trial(self, input_dim: int, trial_seed: int) -> None:
        self.state_ = LearnerState(algorithm=self.algorithm)
        self.logs_: list[TaskLog] = []
        self.input_dim_ = input_dim
        if self.uses_memory:
            self.memory_ = ExemplarMemory(capacity=self.memory_capacity)
        self._init_model(trial_seed)

    def _init_model(self, trial_seed: int) -> None:
        # head starts empty; _begin_task adds the first task's classes
        dims = [self.input_dim_, *self.hidden_dims]
        self.net_ = init_mlp(dims + [0], derive_seed(trial_seed, "init"))

    def _begin_task(self, task_index: int, task: Task, trial_seed: int) -> None:
        overlap = set(task.class_ids) & set(self.state_.classes_seen)
        if overlap:
            raise ContractViolation(f"classes {sorted(overlap)} already trained")
        self.state_.classes_seen.extend(int(c) for c in task.class_ids)
        self._grow_head(len(task.class_ids), derive_seed(trial_seed, "head", task_index))

    def _grow_head(self, new_classes: int, seed: int) -> None:
        w, b = self.net_.weights[-1], self.net_.biases[-1]
        fan_in = w.shape[0]
        total = w.shape[1] + new_classes
        bound = np.sqrt(6.0 / (fan_in + total))
        fresh = rng_from(seed).uniform(-bound, bound, size=(fan_in, new_classes))
        self.net_.weights[-1] = np.hstack([w, fresh])
        self.net_.biases[-1] = np.concatenate([b, np.zeros(new_classes)])
        self.net_.layer_dims = self.net_.layer_dims[:-1] + (total,)

    def _mark_diverged(self, task_index: int, log: TaskLog, started: float) -> TaskLog:
        self.state_.seconds_train += time.monotonic() - started
        self.state_.status = "diverged"
        self.state_.diverged_task = task_index
        log.diverged = True
        self.logs_.append(log)
        return log

    # ------------------------------------------------------------------
    # training internals
    # ------------------------------------------------------------------

    def _head_index(self, labels: np.ndarray) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.state_.classes_seen)}
        return np.asarray([lookup[int(c)] for c in labels], dtype=np.int64)

    def _resolve_schedule(self, task_index: int) -> tuple[Schedule, float]:
        """(schedule, weight_decay): fixed values for the first task,
        the sampled hyperparameters afterwards."""
        kind = {"StepLR": "step", "Cosine": "cosine"}.get(self.scheduler, self.scheduler)
        if kind not in ("step", "cosine"):
            raise ContractViolation(f"unknown scheduler '{self.scheduler}'")
        if task_index == 0:
            first = self.first_task or DEFAULT_FIRST_TASK
            epochs = scale_epochs(first.epochs, self.init_scale)
            milestones = tuple(
                sorted(
                    {
                        m
                        for m in (
                            scale_epochs(ms, self.init_scale) for ms in first.milestones
                        )
                        if m < epochs
                    }
                )
            )
            schedule = Schedule(
                kind=kind,
                base_lr=first.lr,
                epochs=epochs,
                milestones=milestones if kind == "step" else (),
                decay=first.lr_decay,
            )
            return schedule, first.weight_decay
        milestones = (
            spaced_milestones(int(self.num_milestones), int(self.epochs))
            if kind == "step"
            else ()
        )
        schedule = Schedule(
            kind=kind,
            base_lr=float(self.lr),
            epochs=int(self.epochs),
            milestones=milestones,
            decay=float(self.lr_decay),
        )
        return schedule, float(self.weight_decay)

    def _training_pool(
        self, features: np.ndarray, labels: np.ndarray, interleave: bool
    ) -> tuple[np.ndarray, np.ndarray]:
        """Current task data, plus the exemplar store when pooling."""
        if interleave or not self.uses_memory or self.memory_.is_empty():
            return features, self._head_index(labels)
        mem_x, mem_y = self.memory_.as_arrays()
        pooled_x = np.concatenate([features, mem_x])
        pooled_y = np.concatenate([labels, mem_y])
        return pooled_x, self._head_index(pooled_y)

    def _loss_config(self, task_index: int, weight_decay: float) -> LossConfig:
        return LossConfig(weight_decay=weight_decay)

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
        config = self._loss_config(task_index, weight_decay)
        interleave = bool(
            self.exemplar_batch_size
            and self.supports_interleave
            and self.uses_memory
            and not self.memory_.is_empty()
        )
        pool_x, pool_y = self._training_pool(features, labels, interleave)
        pool_x, pool_y = self._carve_heldout(task_index, pool_x, pool_y, trial_seed)
        for epoch in range(schedule.epochs):
            lr = lr_at(schedule, epoch)
            seed = derive_seed(trial_seed, "epoch", task_index, epoch)
            if interleave:
                self.net_, mean_loss = self._interleaved_epoch(
                    pool_x, pool_y, lr, seed, config
                )
            else:
                self.net_, mean_loss = sgd_epoch(
                    self.net_, pool_x, pool_y, lr, int(self.batch_size), seed, config
                )
            log.entries.append(EpochEntry(task_index, epoch, lr, mean_loss))

    def _interleaved_epoch(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        lr: float,
        seed: int,
        config: LossConfig,
    ) -> tuple[MlpParams, float]:
        """Each current-task minibatch gets a fixed-size sub-batch drawn
        from the exemplar store appended to it."""
        mem_x, mem_labels = self.memory_.as_arrays()
        mem_y = self._head_index(mem_labels)
        sub = int(self.exemplar_batch_size)
        batch = int(self.batch_size)
        rng = rng_from(seed)
        order = rng.permutation(features.shape[0])
        params = self.net_
        losses = []
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            for start in range(0, features.shape[0], batch):
                idx = order[start : start + batch]
                pick = rng.choice(
                    mem_x.shape[0], size=sub, replace=mem_x.shape[0] < sub
                )
                xb = np.concatenate([features[idx], mem_x[pick]])
                yb = np.concatenate([labels[idx], mem_y[pick]])
                kd_ref = None
                if config.kd_teacher is not None and config.kd_lambda > 0.0:
                    kd_ref = (
                        forward(config.kd_teacher, xb),
                        config.kd_temperature,
                        config.kd_lambda,
                    )
                loss, grads = loss_and_grad(
                    params, xb, yb, kd_ref=kd_ref, weight_decay=config.weight_decay
                )
                params = sgd_step(params, grads, lr)
                losses.append(loss)
        return params, float(np.mean(losses))

    def _carve_heldout(
        self,
        task_index: int,
        features: np.ndarray,
        labels: np.ndarray,
        trial_seed: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        return features, labels

    def _post_task(
        self, task_index: int, task: Task, trial_seed: int, log: TaskLog
    ) -> None:
        pass

    # ------------------------------------------------------------------
    # inference hooks
    # ------------------------------------------------------------------

    def _forward_eval(self, features: np.ndarray) -> np.ndarray:
        return forward(self.net_, features)

    def _adjust_logits(self, logits: np.ndarray) -> np.ndarray:
        return logits
