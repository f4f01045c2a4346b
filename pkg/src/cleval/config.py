"""Experiment configuration: one JSON document describing the algorithm,
the data sources for both phases, the scenario, the hyperparameter space
and the protocol parameters. Validated against a JSON Schema before any
work happens; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .data import (
    LabeledDataset,
    disjoint_class_split,
    load_cifar_binary,
    load_csv,
    random_project,
    synth_gaussians,
)
from .errors import ConfigurationError
from .learners import LEARNERS, FirstTaskParams
from .protocol import EngineSettings, HyperparameterSpace
from .scenario import SCENARIO_PRESETS, ScenarioSpec

CONFIG_SCHEMA_VERSION = 1

_SOURCE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "synthetic"},
                "num_classes": {"type": "integer", "minimum": 2},
                "dim": {"type": "integer", "minimum": 2},
                "per_class": {"type": "integer", "minimum": 4},
                "separation": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["kind", "num_classes", "dim", "per_class", "separation", "seed"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "csv"},
                "path": {"type": "string"},
            },
            "required": ["kind", "path"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "cifar"},
                "path": {"type": "string"},
                "variant": {"enum": ["cifar10", "cifar100-fine"]},
            },
            "required": ["kind", "path", "variant"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": CONFIG_SCHEMA_VERSION},
        "algorithm": {"type": "string"},
        "condition": {"type": "string"},
        "data": {
            "type": "object",
            "properties": {
                "source": _SOURCE_SCHEMA,
                "split": {
                    "type": "object",
                    "properties": {
                        "first_fraction": {
                            "type": "number",
                            "exclusiveMinimum": 0,
                            "exclusiveMaximum": 1,
                        },
                        "seed": {"type": "integer", "minimum": 0},
                    },
                    "required": ["first_fraction", "seed"],
                    "additionalProperties": False,
                },
                "tuning": _SOURCE_SCHEMA,
                "evaluation": _SOURCE_SCHEMA,
                "project": {
                    "type": "object",
                    "properties": {
                        "out_dim": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                    "required": ["out_dim", "seed"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "scenario": {
            "type": "object",
            "properties": {
                "preset": {"enum": sorted(SCENARIO_PRESETS)},
                "first_task_classes": {"type": "integer", "minimum": 1},
                "increment_classes": {"type": "integer", "minimum": 1},
                "val_fraction": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 0.5,
                },
            },
            "additionalProperties": False,
        },
        "space": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {"type": "array", "minItems": 1},
        },
        "first_task": {
            "type": "object",
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "milestones": {"type": "array", "items": {"type": "integer"}},
                "lr_decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "weight_decay": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "R": {"type": "integer", "minimum": 1},
        "S": {"type": "integer", "minimum": 1},
        "base_seed": {"type": "integer", "minimum": 0},
        "jobs": {"type": "integer", "minimum": 1},
        "init_scale": {"type": "number", "exclusiveMinimum": 0},
        "memory_capacity": {"type": "integer", "minimum": 1},
        "hidden_dims": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "out_dir": {"type": "string"},
    },
    "required": ["schema_version", "algorithm", "data", "scenario", "space", "R", "S", "base_seed"],
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    algorithm: str
    condition: str
    data: dict
    scenario_spec: ScenarioSpec
    scenario_label: str
    space: HyperparameterSpace
    R: int
    S: int
    base_seed: int
    settings: EngineSettings
    out_dir: str | None
    base_dir: Path

    @property
    def raw_space(self) -> dict:
        return {entry.name: list(entry.values) for entry in self.space.entries}


def validate_config(payload: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(payload), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid configuration at {where}: {err.message}")

    data = payload["data"]
    has_split = "source" in data or "split" in data
    has_sides = "tuning" in data or "evaluation" in data
    if has_split == has_sides:
        raise ConfigurationError(
            "data must give either {source, split} or {tuning, evaluation}"
        )
    if has_split and not ("source" in data and "split" in data):
        raise ConfigurationError("data.source and data.split go together")
    if has_sides and not ("tuning" in data and "evaluation" in data):
        raise ConfigurationError("data.tuning and data.evaluation go together")

    scenario = payload["scenario"]
    if "preset" in scenario:
        extra = set(scenario) - {"preset", "val_fraction"}
        if extra:
            raise ConfigurationError(
                f"scenario preset cannot be combined with {sorted(extra)}"
            )
    elif not {"first_task_classes", "increment_classes"} <= set(scenario):
        raise ConfigurationError(
            "scenario needs a preset or explicit first_task_classes/increment_classes"
        )

    if payload["algorithm"] not in LEARNERS and not payload["algorithm"].startswith("bridge:"):
        raise ConfigurationError(
            f"unknown algorithm '{payload['algorithm']}', "
            f"expected one of {sorted(LEARNERS)}"
        )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"configuration file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON: {exc}") from None
    return parse_config(payload, base_dir=path.parent)


def parse_config(payload: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    validate_config(payload)
    scenario = payload["scenario"]
    val_fraction = scenario.get("val_fraction", 0.2)
    if "preset" in scenario:
        spec = ScenarioSpec.preset(scenario["preset"], val_fraction)
        label = scenario["preset"]
    else:
        spec = ScenarioSpec(
            scenario["first_task_classes"], scenario["increment_classes"], val_fraction
        )
        label = f"first{spec.first_task_classes}-inc{spec.increment_classes}"

    first_task = (
        FirstTaskParams.from_dict(payload["first_task"])
        if "first_task" in payload
        else None
    )
    settings = EngineSettings(
        memory_capacity=payload.get("memory_capacity", 1000),
        init_scale=payload.get("init_scale", 0.1),
        hidden_dims=tuple(payload.get("hidden_dims", (32, 32))),
        jobs=payload.get("jobs", 1),
        first_task=first_task,
    )
    return ExperimentConfig(
        algorithm=payload["algorithm"],
        condition=payload.get("condition", ""),
        data=payload["data"],
        scenario_spec=spec,
        scenario_label=label,
        space=HyperparameterSpace.from_mapping(payload["space"]),
        R=payload["R"],
        S=payload["S"],
        base_seed=payload["base_seed"],
        settings=settings,
        out_dir=payload.get("out_dir"),
        base_dir=Path(base_dir),
    )


def _build_source(source: dict, base_dir: Path) -> LabeledDataset:
    kind = source["kind"]
    if kind == "synthetic":
        return synth_gaussians(
            num_classes=source["num_classes"],
            dim=source["dim"],
            per_class=source["per_class"],
            separation=source["separation"],
            seed=source["seed"],
        )
    path = Path(source["path"])
    if not path.is_absolute():
        path = base_dir / path
    if kind == "csv":
        return load_csv(path)
    return load_cifar_binary(path, source["variant"])


def build_datasets(config: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """(tuning, evaluation) datasets, split and projected as configured."""
    data = config.data
    if "source" in data:
        source = _build_source(data["source"], config.base_dir)
        pair = disjoint_class_split(
            source, data["split"]["first_fraction"], data["split"]["seed"]
        )
        tuning, evaluation = pair.tuning, pair.evaluation
    else:
        tuning = _build_source(data["tuning"], config.base_dir)
        evaluation = _build_source(data["evaluation"], config.base_dir)
    if "project" in data:
        proj = data["project"]
        tuning = random_project(tuning, proj["out_dim"], proj["seed"])
        evaluation = random_project(evaluation, proj["out_dim"], proj["seed"])
    return tuning, evaluation
