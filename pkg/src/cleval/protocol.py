"""The two-phase evaluation protocol.

Tuning phase: R uniformly sampled hyperparameter assignments, each
trained S times on the tuning dataset under freshly shuffled class
orderings; per-assignment performance is the trial mean of (Acc,
AvgAcc). The assignment with the best harmonic mean is then applied
unchanged, for S more trials, to the evaluation dataset; that averaged
result is the algorithm's score.

Every (r, s) cell is a pure function of the experiment inputs and the
base seed, so cells may run in any order or in parallel and any subset
reproduces bit-for-bit. Wall-clock timings are the one exception and are
segregated under a ``timing`` key everywhere.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .data import LabeledDataset
from .errors import ConfigurationError, ContractViolation
from .learners import FirstTaskParams, make_learner, resolve_hyperparams
from .metrics import MetricPair, avg_acc, select_best_set
from .scenario import ScenarioSpec, make_scenario, shuffle_ordering
from .seeding import derive_seed, rng_from

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SpaceEntry:
    name: str
    values: tuple
    kind: str  # "real" | "int" | "categorical"


@dataclass(frozen=True)
class HyperparameterSpace:
    entries: tuple[SpaceEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate hyperparameter names in space")
        for e in self.entries:
            if not e.values:
                raise ConfigurationError(f"empty value set for '{e.name}'")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "HyperparameterSpace":
        entries = []
        for name, values in mapping.items():
            if not isinstance(values, (list, tuple)):
                raise ConfigurationError(f"value set for '{name}' must be a list")
            entries.append(SpaceEntry(name=name, values=tuple(values), kind=_kind(values)))
        return cls(entries=tuple(entries))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _kind(values) -> str:
    if all(isinstance(v, bool) for v in values):
        return "categorical"
    if all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        return "int"
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        return "real"
    return "categorical"


@dataclass(frozen=True)
class HyperparameterAssignment:
    values: dict
    index: int

    def __post_init__(self):
        if not self.values:
            raise ContractViolation("empty hyperparameter assignment")


@dataclass
class RunRecord:
    algorithm: str
    phase: str  # "tuning" | "evaluation"
    r: int
    s: int
    assignment: dict
    trial_seed: int
    acc_series: list[float]
    acc: float
    avg_acc: float
    status: str  # "healthy" | "diverged"
    diverged_task: int | None
    param_counts: list[int]
    timing: dict[str, float]
    diagnostic: str | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def metrics(self) -> MetricPair:
        return MetricPair(acc=self.acc, avg_acc=self.avg_acc)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "algorithm": self.algorithm,
            "phase": self.phase,
            "r": self.r,
            "s": self.s,
            "assignment": dict(self.assignment),
            "trial_seed": self.trial_seed,
            "acc_series": list(self.acc_series),
            "acc": self.acc,
            "avg_acc": self.avg_acc,
            "status": self.status,
            "diverged_task": self.diverged_task,
            "param_counts": list(self.param_counts),
            "diagnostic": self.diagnostic,
            "timing": dict(self.timing),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunRecord":
        return cls(
            algorithm=payload["algorithm"],
            phase=payload["phase"],
            r=payload["r"],
            s=payload["s"],
            assignment=dict(payload["assignment"]),
            trial_seed=payload["trial_seed"],
            acc_series=list(payload["acc_series"]),
            acc=payload["acc"],
            avg_acc=payload["avg_acc"],
            status=payload["status"],
            diverged_task=payload.get("diverged_task"),
            param_counts=list(payload["param_counts"]),
            timing=dict(payload.get("timing", {})),
            diagnostic=payload.get("diagnostic"),
            schema_version=payload["schema_version"],
        )


@dataclass(frozen=True)
class EngineSettings:
    """Everything a trial needs besides the data and the assignment."""

    memory_capacity: int = 1000
    init_scale: float = 0.1
    hidden_dims: tuple[int, ...] = (32, 32)
    jobs: int = 1
    first_task: FirstTaskParams | None = None


def sample_assignment(
    space: HyperparameterSpace, r: int, base_seed: int
) -> HyperparameterAssignment:
    """Independent uniform draw from every entry's value set; the RNG is
    derived from (base_seed, "tuning-sample", r), so duplicate
    assignments across r are possible and fine."""
    rng = rng_from(derive_seed(base_seed, "tuning-sample", r))
    values = {e.name: e.values[int(rng.integers(len(e.values)))] for e in space.entries}
    return HyperparameterAssignment(values=values, index=r)


def run_trial(
    algorithm: str,
    dataset: LabeledDataset,
    spec: ScenarioSpec,
    assignment: HyperparameterAssignment,
    *,
    phase: str,
    r: int,
    s: int,
    order_seed: int,
    scenario_seed: int,
    trial_seed: int,
    settings: EngineSettings,
) -> RunRecord:
    """One full CL run: fresh ordering, fresh model, train every task,
    measure Acc_t after each. Divergence ends training early and scores
    the trial (0, 0)."""
    ordering = shuffle_ordering(sorted(dataset.class_set), order_seed)
    sequence = make_scenario(dataset, spec, ordering, scenario_seed)
    learner = make_learner(
        algorithm,
        assignment.values,
        hidden_dims=settings.hidden_dims,
        memory_capacity=settings.memory_capacity,
        init_scale=settings.init_scale,
        first_task=settings.first_task,
    )
    series: list[float] = []
    for t, task in enumerate(sequence.tasks):
        learner.train_task(t, task, trial_seed)
        if learner.state_.status == "diverged":
            break
        series.append(learner.evaluate_upto(sequence.val_upto(t + 1)))

    diverged = learner.state_.status == "diverged"
    if diverged:
        acc, mean_acc = 0.0, 0.0
    else:
        acc, mean_acc = series[-1], avg_acc(series)
    return RunRecord(
        algorithm=algorithm,
        phase=phase,
        r=r,
        s=s,
        assignment=dict(assignment.values),
        trial_seed=trial_seed,
        acc_series=series,
        acc=acc,
        avg_acc=mean_acc,
        status="diverged" if diverged else "healthy",
        diverged_task=learner.state_.diverged_task,
        param_counts=list(learner.state_.param_counts),
        timing={
            "seconds_train": learner.state_.seconds_train,
            "seconds_post": learner.state_.seconds_post,
            "seconds_total": learner.training_seconds(),
        },
    )


def _run_cell(args: tuple) -> RunRecord:
    return run_trial(*args[0], **args[1])


def _execute(cells: list[tuple], jobs: int) -> list[RunRecord]:
    if jobs <= 1:
        records = [_run_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, cells))
    return sorted(records, key=lambda rec: (rec.phase, rec.r, rec.s))


@dataclass(frozen=True)
class TuningResult:
    records: list[RunRecord]
    table: list[tuple[HyperparameterAssignment, MetricPair]]


def aggregate_tuning(records: Sequence[RunRecord]) -> list[tuple[HyperparameterAssignment, MetricPair]]:
    """Rebuild the {(H_r, P_r)} table from per-trial records: Acc and
    AvgAcc averaged over s separately, diverged trials contributing
    (0, 0)."""
    by_r: dict[int, list[RunRecord]] = {}
    for rec in records:
        by_r.setdefault(rec.r, []).append(rec)
    table = []
    for r in sorted(by_r):
        trials = sorted(by_r[r], key=lambda rec: rec.s)
        pair = MetricPair(
            acc=sum(t.acc for t in trials) / len(trials),
            avg_acc=sum(t.avg_acc for t in trials) / len(trials),
        )
        table.append(
            (HyperparameterAssignment(values=dict(trials[0].assignment), index=r), pair)
        )
    return table


def tuning_phase(
    algorithm: str,
    tuning_data: LabeledDataset,
    spec: ScenarioSpec,
    space: HyperparameterSpace,
    R: int,
    S: int,
    base_seed: int,
    settings: EngineSettings = EngineSettings(),
) -> TuningResult:
    if R < 1 or S < 1:
        raise ContractViolation("R and S must be >= 1")
    cells = []
    for r in range(R):
        assignment = sample_assignment(space, r, base_seed)
        for s in range(S):
            cells.append(
                (
                    (algorithm, tuning_data, spec, assignment),
                    dict(
                        phase="tuning",
                        r=r,
                        s=s,
                        order_seed=derive_seed(base_seed, "order", r, s),
                        scenario_seed=derive_seed(base_seed, "scenario", r, s),
                        trial_seed=derive_seed(base_seed, "trial", r, s),
                        settings=settings,
                    ),
                )
            )
    records = _execute(cells, settings.jobs)
    return TuningResult(records=records, table=aggregate_tuning(records))


@dataclass(frozen=True)
class EvalResult:
    records: list[RunRecord]
    performance: MetricPair
    acc_sd: float
    avg_acc_sd: float

    @property
    def diverged(self) -> bool:
        return all(rec.status == "diverged" for rec in self.records)


def _sample_sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


def evaluation_phase(
    algorithm: str,
    eval_data: LabeledDataset,
    spec: ScenarioSpec,
    best: HyperparameterAssignment,
    S: int,
    base_seed: int,
    settings: EngineSettings = EngineSettings(),
) -> EvalResult:
    if S < 1:
        raise ContractViolation("S must be >= 1")
    # fails fast if the assignment misses names the algorithm needs
    resolve_hyperparams(algorithm, best.values)
    cells = [
        (
            (algorithm, eval_data, spec, best),
            dict(
                phase="evaluation",
                r=best.index,
                s=s,
                order_seed=derive_seed(base_seed, "eval-order", s),
                scenario_seed=derive_seed(base_seed, "eval-scenario", s),
                trial_seed=derive_seed(base_seed, "eval-trial", s),
                settings=settings,
            ),
        )
        for s in range(S)
    ]
    records = _execute(cells, settings.jobs)
    performance = MetricPair(
        acc=sum(rec.acc for rec in records) / len(records),
        avg_acc=sum(rec.avg_acc for rec in records) / len(records),
    )
    return EvalResult(
        records=records,
        performance=performance,
        acc_sd=_sample_sd([rec.acc for rec in records]),
        avg_acc_sd=_sample_sd([rec.avg_acc for rec in records]),
    )


@dataclass
class PhaseReport:
    """Full outcome of one protocol run for one algorithm."""

    algorithm: str
    condition: str
    scenario: dict
    R: int
    S: int
    base_seed: int
    memory_capacity: int
    init_scale: float
    tuning_table: list[dict]
    best_r: int
    best_assignment: dict
    eval_acc: float
    eval_avg_acc: float
    eval_acc_sd: float
    eval_avg_acc_sd: float
    eval_diverged: bool
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "algorithm": self.algorithm,
            "condition": self.condition,
            "scenario": dict(self.scenario),
            "R": self.R,
            "S": self.S,
            "base_seed": self.base_seed,
            "memory_capacity": self.memory_capacity,
            "init_scale": self.init_scale,
            "tuning_table": [dict(row) for row in self.tuning_table],
            "best_r": self.best_r,
            "best_assignment": dict(self.best_assignment),
            "eval": {
                "acc": self.eval_acc,
                "avg_acc": self.eval_avg_acc,
                "acc_sd": self.eval_acc_sd,
                "avg_acc_sd": self.eval_avg_acc_sd,
                "diverged": self.eval_diverged,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PhaseReport":
        ev = payload["eval"]
        return cls(
            algorithm=payload["algorithm"],
            condition=payload["condition"],
            scenario=dict(payload["scenario"]),
            R=payload["R"],
            S=payload["S"],
            base_seed=payload["base_seed"],
            memory_capacity=payload["memory_capacity"],
            init_scale=payload["init_scale"],
            tuning_table=[dict(row) for row in payload["tuning_table"]],
            best_r=payload["best_r"],
            best_assignment=dict(payload["best_assignment"]),
            eval_acc=ev["acc"],
            eval_avg_acc=ev["avg_acc"],
            eval_acc_sd=ev["acc_sd"],
            eval_avg_acc_sd=ev["avg_acc_sd"],
            eval_diverged=ev["diverged"],
            schema_version=payload["schema_version"],
        )


def run_protocol(
    algorithm: str,
    tuning_data: LabeledDataset,
    eval_data: LabeledDataset,
    spec: ScenarioSpec,
    space: HyperparameterSpace,
    R: int,
    S: int,
    base_seed: int,
    settings: EngineSettings = EngineSettings(),
    condition: str = "",
    scenario_label: str = "",
) -> tuple[PhaseReport, list[RunRecord]]:
    """Tuning, selection, evaluation; returns the report plus every
    persisted-grade record from both phases."""
    tuning = tuning_phase(algorithm, tuning_data, spec, space, R, S, base_seed, settings)
    best = select_best_set(tuning.table)
    evaluation = evaluation_phase(
        algorithm, eval_data, spec, best, S, base_seed, settings
    )
    report = PhaseReport(
        algorithm=algorithm,
        condition=condition or f"{tuning_data.name}->{eval_data.name}",
        scenario={
            "label": scenario_label,
            "first_task_classes": spec.first_task_classes,
            "increment_classes": spec.increment_classes,
            "val_fraction": spec.val_fraction,
        },
        R=R,
        S=S,
        base_seed=base_seed,
        memory_capacity=settings.memory_capacity,
        init_scale=settings.init_scale,
        tuning_table=[
            {"r": a.index, "assignment": dict(a.values), "acc": p.acc, "avg_acc": p.avg_acc}
            for a, p in tuning.table
        ],
        best_r=best.index,
        best_assignment=dict(best.values),
        eval_acc=evaluation.performance.acc,
        eval_avg_acc=evaluation.performance.avg_acc,
        eval_acc_sd=evaluation.acc_sd,
        eval_avg_acc_sd=evaluation.avg_acc_sd,
        eval_diverged=evaluation.diverged,
    )
    return report, tuning.records + evaluation.records
