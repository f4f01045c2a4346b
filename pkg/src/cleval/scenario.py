"""Class-incremental scenario construction and the exemplar memory.

A scenario shuffles the class ordering, partitions classes into tasks
(first task may be larger), and carves a stratified per-class train/val
holdout inside every task. The exemplar memory is a bounded class-balanced
buffer rebuilt from scratch at every task boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import ConfigurationError, ContractViolation
from .seeding import derive_seed, rng_from

SCENARIO_PRESETS = {
    # 50-class side -> ten 5-class tasks
    "10tasks": (5, 5),
    # 50-class side -> 25 classes up front, then five 5-class tasks
    "6tasks": (25, 5),
}


@dataclass(frozen=True)
class ScenarioSpec:
    first_task_classes: int
    increment_classes: int
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.increment_classes < 1:
            raise ContractViolation("increment_classes must be >= 1")
        if self.first_task_classes < self.increment_classes:
            raise ContractViolation(
                "first_task_classes must be >= increment_classes"
            )
        if not 0.0 < self.val_fraction < 0.5:
            raise ContractViolation("val_fraction must lie in (0, 0.5)")

    @classmethod
    def preset(cls, name: str, val_fraction: float = 0.2) -> "ScenarioSpec":
        if name not in SCENARIO_PRESETS:
            raise ConfigurationError(
                f"unknown scenario preset '{name}', "
                f"expected one of {sorted(SCENARIO_PRESETS)}"
            )
        first, inc = SCENARIO_PRESETS[name]
        return cls(first, inc, val_fraction)

    def task_sizes(self, num_classes: int) -> list[int]:
        rest = num_classes - self.first_task_classes
        if rest < 0 or rest % self.increment_classes != 0:
            raise ConfigurationError(
                f"{num_classes} classes do not fit (first={self.first_task_classes}, "
                f"increment={self.increment_classes}): residue "
                f"{rest % self.increment_classes if rest > 0 else rest}"
            )
        return [self.first_task_classes] + [self.increment_classes] * (
            rest // self.increment_classes
        )


@dataclass(frozen=True)
class Task:
    train: LabeledDataset
    val: LabeledDataset
    class_ids: tuple[int, ...]


@dataclass(frozen=True)
class TaskSequence:
    tasks: tuple[Task, ...]
    ordering: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tasks)

    def val_upto(self, t: int) -> list[LabeledDataset]:
        """Validation sets of tasks 1..t (t is 1-based)."""
        if not 1 <= t <= len(self.tasks):
            raise ContractViolation(f"t = {t} outside 1..{len(self.tasks)}")
        return [task.val for task in self.tasks[:t]]


def shuffle_ordering(class_ids: list[int], seed: int) -> list[int]:
    """Seeded Fisher-Yates permutation of the class ids."""
    if not class_ids:
        raise ContractViolation("cannot shuffle an empty class list")
    rng = rng_from(seed)
    order = list(class_ids)
    for i in range(len(order) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def make_scenario(
    data: LabeledDataset, spec: ScenarioSpec, ordering: list[int], seed: int
) -> TaskSequence:
    """Partition classes along ``ordering`` into tasks and carve the
    per-class stratified train/val holdout inside each task."""
    if sorted(ordering) != list(data.class_set):
        raise ContractViolation("ordering is not a permutation of the class set")
    data.require_min_per_class(2)
    sizes = spec.task_sizes(len(ordering))

    rng = rng_from(derive_seed(seed, "holdout"))
    tasks: list[Task] = []
    cursor = 0
    for t, size in enumerate(sizes):
        class_ids = tuple(ordering[cursor : cursor + size])
        cursor += size
        train_idx: list[np.ndarray] = []
        val_idx: list[np.ndarray] = []
        for cls in class_ids:
            idx = np.nonzero(data.labels == cls)[0]
            idx = idx[rng.permutation(idx.size)]
            n_val = max(1, int(np.floor(spec.val_fraction * idx.size)))
            val_idx.append(idx[:n_val])
            train_idx.append(idx[n_val:])
        train = _gather(data, np.concatenate(train_idx), f"{data.name}-task{t + 1}-train")
        val = _gather(data, np.concatenate(val_idx), f"{data.name}-task{t + 1}-val")
        tasks.append(Task(train=train, val=val, class_ids=class_ids))
    return TaskSequence(tasks=tuple(tasks), ordering=tuple(ordering))


def _gather(data: LabeledDataset, idx: np.ndarray, name: str) -> LabeledDataset:
    return LabeledDataset(
        features=data.features[idx],
        labels=data.labels[idx],
        name=name,
        source_labels=dict(data.source_labels),
    )


@dataclass
class ExemplarMemory:
    """Bounded class-balanced replay buffer.

    Per-class counts never differ by more than 1; the remainder of
    capacity // num_classes goes to the earliest-encountered classes.
    """

    capacity: int
    store: dict[int, np.ndarray] = field(default_factory=dict)
    seen_classes: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ContractViolation("memory capacity must be >= 1")

    @property
    def size(self) -> int:
        return sum(arr.shape[0] for arr in self.store.values())

    def class_counts(self) -> dict[int, int]:
        return {cls: arr.shape[0] for cls, arr in self.store.items()}

    def is_empty(self) -> bool:
        return self.size == 0

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_empty():
            raise ContractViolation("empty exemplar memory has no arrays")
        feats = np.concatenate([self.store[c] for c in self.seen_classes if c in self.store])
        labels = np.concatenate(
            [
                np.full(self.store[c].shape[0], c, dtype=np.int64)
                for c in self.seen_classes
                if c in self.store
            ]
        )
        return feats, labels

    def quotas(self) -> dict[int, int]:
        base, extra = divmod(self.capacity, len(self.seen_classes))
        return {
            cls: base + (1 if i < extra else 0)
            for i, cls in enumerate(self.seen_classes)
        }


def rebuild_exemplar_memory(
    memory: ExemplarMemory, new_task_train: LabeledDataset, rng_seed: int
) -> ExemplarMemory:
    """Rebuild the buffer from (prior store + new task train data).

    The new task's classes must be unseen. Every class gets its quota
    drawn uniformly without replacement from whatever is available for
    it; classes with fewer available examples keep everything they have.
    """
    new_classes = [int(c) for c in new_task_train.class_set]
    overlap = set(new_classes) & set(memory.seen_classes)
    if overlap:
        raise ContractViolation(f"classes {sorted(overlap)} already in memory")

    rebuilt = ExemplarMemory(
        capacity=memory.capacity,
        seen_classes=memory.seen_classes + new_classes,
    )
    pools: dict[int, np.ndarray] = {c: arr for c, arr in memory.store.items()}
    for cls in new_classes:
        pools[cls] = new_task_train.features[new_task_train.labels == cls]

    rng = rng_from(rng_seed)
    quotas = rebuilt.quotas()
    for cls in rebuilt.seen_classes:
        pool = pools[cls]
        keep = min(quotas[cls], pool.shape[0])
        chosen = rng.choice(pool.shape[0], size=keep, replace=False)
        rebuilt.store[cls] = pool[np.sort(chosen)].copy()
    return rebuilt
