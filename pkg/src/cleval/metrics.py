"""Accuracy metrics and the best-hyperparameter selection rule.

Acc is final accuracy over everything seen; AvgAcc is the mean of the
per-task incremental accuracies Acc_1..Acc_T. A hyperparameter assignment
is scored by the harmonic mean of the two, and the assignment with the
highest score wins. Everything here is a pure function over immutable
inputs; fractions in [0, 1] internally, percentage formatting happens at
the reporting layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar

from .errors import ContractViolation

A = TypeVar("A")


@dataclass(frozen=True)
class TaskAccuracySeries:
    """Acc_t for t = 1..T, each measured over the union of validation
    data of tasks 1..t after training task t."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ContractViolation("accuracy series must be nonempty")
        for i, v in enumerate(self.values):
            if not 0.0 <= v <= 1.0:
                raise ContractViolation(f"Acc_{i + 1} = {v} outside [0, 1]")

    @property
    def num_tasks(self) -> int:
        return len(self.values)

    @property
    def final(self) -> float:
        return self.values[-1]


@dataclass(frozen=True)
class MetricPair:
    """Final accuracy and average incremental accuracy, as fractions."""

    acc: float
    avg_acc: float

    def __post_init__(self):
        if not (0.0 <= self.acc <= 1.0 and 0.0 <= self.avg_acc <= 1.0):
            raise ContractViolation(f"metrics outside [0, 1]: {self}")

    @classmethod
    def from_series(cls, series: TaskAccuracySeries) -> "MetricPair":
        return cls(acc=series.final, avg_acc=avg_acc(series))

    def score(self) -> float:
        return harmonic_mean(self.acc, self.avg_acc)


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Top-1 accuracy: fraction of positions where prediction == label."""
    if len(predictions) == 0:
        raise ContractViolation("accuracy of empty prediction list")
    if len(predictions) != len(labels):
        raise ContractViolation(
            f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels"
        )
    hits = sum(1 for p, y in zip(predictions, labels) if p == y)
    return hits / len(predictions)


def avg_acc(series: TaskAccuracySeries | Sequence[float]) -> float:
    """Arithmetic mean of Acc_1..Acc_T."""
    values = series.values if isinstance(series, TaskAccuracySeries) else tuple(series)
    if not values:
        raise ContractViolation("avg_acc of empty series")
    return sum(values) / len(values)


def harmonic_mean(a: float, b: float) -> float:
    """2ab / (a + b); both arguments must share a scale (fraction or %).

    Defined as 0 when a + b == 0: the continuous limit along a == b and
    the value that maximally penalizes a degenerate run.
    """
    if a < 0 or b < 0:
        raise ContractViolation(f"harmonic mean of negative input ({a}, {b})")
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def select_best_set(records: Sequence[tuple[A, MetricPair]]) -> A:
    """The assignment whose harmonic mean of (acc, avg_acc) is maximal.

    Ties break toward the lowest record index, so output is stable under
    re-runs of the same ordered table.
    """
    if not records:
        raise ContractViolation("select_best_set over empty record list")
    best_idx = 0
    best_score = records[0][1].score()
    for i, (_, pair) in enumerate(records[1:], start=1):
        score = pair.score()
        if score > best_score:
            best_idx, best_score = i, score
    return records[best_idx][0]
