"""Command-line surface.

    cleval split  --config c.json --out DIR      write the disjoint-class
                                                 dataset halves as CSV + sidecar
    cleval tune   --config c.json --out DIR      tuning phase -> records + table
    cleval select --config c.json --out DIR      pick the best assignment from
                                                 persisted tuning records
    cleval eval   --config c.json --out DIR      evaluation phase with the
                                                 selected assignment
    cleval run    --config c.json --out DIR      the whole protocol end to end
    cleval report --out DIR                      rebuild results table + curves
                                                 from everything in DIR

Common flags: --config PATH, --seed U64, --out DIR, --jobs N, --algo ID.
Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ExperimentConfig, build_datasets, load_config
from .data import save_csv
from .errors import ConfigurationError
from .metrics import select_best_set
from .protocol import (
    HyperparameterAssignment,
    aggregate_tuning,
    evaluation_phase,
    run_protocol,
    tuning_phase,
)
from .reporting import (
    emit_curves,
    emit_results_table,
    read_records,
    read_report,
    write_records,
    write_report,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="cleval", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, helptext in [
        ("split", "write the disjoint-class dataset halves"),
        ("tune", "run the hyperparameter tuning phase"),
        ("select", "select the best assignment from tuning records"),
        ("eval", "run the evaluation phase with the selected assignment"),
        ("run", "run the full protocol end to end"),
        ("report", "rebuild results table and curve data from an output dir"),
    ]:
        p = sub.add_parser(name, help=helptext)
        if name != "report":
            p.add_argument("--config", required=True, help="experiment configuration JSON")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=None, help="parallel trial width")
        p.add_argument("--algo", default=None, help="override the configured algorithm")
    return parser


def _load(args) -> tuple[ExperimentConfig, Path]:
    config = load_config(args.config)
    if args.algo:
        config.algorithm = args.algo
    if args.seed is not None:
        config.base_seed = args.seed
    if args.jobs is not None:
        config.settings = dataclasses.replace(config.settings, jobs=args.jobs)
    out = args.out or config.out_dir
    if not out:
        raise ConfigurationError("no output directory: pass --out or set out_dir")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return config, out_dir


def _paths(out_dir: Path, algorithm: str) -> dict[str, Path]:
    return {
        "tuning_records": out_dir / f"{algorithm}_tuning_records.jsonl",
        "tuning_table": out_dir / f"{algorithm}_tuning_table.json",
        "eval_records": out_dir / f"{algorithm}_eval_records.jsonl",
        "best": out_dir / f"{algorithm}_best.json",
        "report": out_dir / f"{algorithm}_report.json",
    }


def cmd_split(args) -> int:
    config, out_dir = _load(args)
    tuning, evaluation = build_datasets(config)
    save_csv(tuning, out_dir / "tuning.csv")
    save_csv(evaluation, out_dir / "evaluation.csv")
    print(f"wrote {out_dir / 'tuning.csv'} ({len(tuning.class_set)} classes)")
    print(f"wrote {out_dir / 'evaluation.csv'} ({len(evaluation.class_set)} classes)")
    return 0


def cmd_tune(args) -> int:
    config, out_dir = _load(args)
    paths = _paths(out_dir, config.algorithm)
    tuning_data, _ = build_datasets(config)
    result = tuning_phase(
        config.algorithm,
        tuning_data,
        config.scenario_spec,
        config.space,
        config.R,
        config.S,
        config.base_seed,
        config.settings,
    )
    write_records(result.records, paths["tuning_records"])
    table = [
        {"r": a.index, "assignment": dict(a.values), "acc": p.acc, "avg_acc": p.avg_acc}
        for a, p in result.table
    ]
    paths["tuning_table"].write_text(json.dumps(table, sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(result.records)} records to {paths['tuning_records']}")
    return 0


def _select_from_records(paths: dict[str, Path]) -> HyperparameterAssignment:
    if not paths["tuning_records"].exists():
        raise ConfigurationError(
            f"no tuning records at {paths['tuning_records']}; run `tune` first"
        )
    table = aggregate_tuning(read_records(paths["tuning_records"]))
    return select_best_set(table)


def cmd_select(args) -> int:
    config, out_dir = _load(args)
    paths = _paths(out_dir, config.algorithm)
    best = _select_from_records(paths)
    payload = {"algorithm": config.algorithm, "r": best.index, "assignment": best.values}
    paths["best"].write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"best assignment r={best.index}: {json.dumps(best.values, sort_keys=True)}")
    return 0


def cmd_eval(args) -> int:
    config, out_dir = _load(args)
    paths = _paths(out_dir, config.algorithm)
    if not paths["best"].exists():
        raise ConfigurationError(f"no selection at {paths['best']}; run `select` first")
    chosen = json.loads(paths["best"].read_text())
    best = HyperparameterAssignment(values=chosen["assignment"], index=chosen["r"])
    _, eval_data = build_datasets(config)
    result = evaluation_phase(
        config.algorithm,
        eval_data,
        config.scenario_spec,
        best,
        config.S,
        config.base_seed,
        config.settings,
    )
    write_records(result.records, paths["eval_records"])
    print(
        f"evaluation P = ({100 * result.performance.acc:.2f}, "
        f"{100 * result.performance.avg_acc:.2f})"
    )
    return 0


def cmd_run(args) -> int:
    config, out_dir = _load(args)
    paths = _paths(out_dir, config.algorithm)
    tuning_data, eval_data = build_datasets(config)
    report, records = run_protocol(
        config.algorithm,
        tuning_data,
        eval_data,
        config.scenario_spec,
        config.space,
        config.R,
        config.S,
        config.base_seed,
        config.settings,
        condition=config.condition,
        scenario_label=config.scenario_label,
    )
    write_records([r for r in records if r.phase == "tuning"], paths["tuning_records"])
    write_records([r for r in records if r.phase == "evaluation"], paths["eval_records"])
    paths["best"].write_text(
        json.dumps(
            {
                "algorithm": config.algorithm,
                "r": report.best_r,
                "assignment": report.best_assignment,
            },
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    write_report(report, paths["report"])
    _emit_outputs(out_dir)
    cell = "- / -" if report.eval_diverged else (
        f"{100 * report.eval_acc:.2f} / {100 * report.eval_avg_acc:.2f}"
    )
    print(f"{config.algorithm}: {cell}  (best r={report.best_r})")
    return 0


def _emit_outputs(out_dir: Path) -> None:
    report_paths = sorted(out_dir.glob("*_report.json"))
    if report_paths:
        reports = [read_report(p) for p in report_paths]
        csv_text, table_text = emit_results_table(reports)
        (out_dir / "results_table.csv").write_text(csv_text)
        (out_dir / "results_table.txt").write_text(table_text)
    eval_records = []
    for path in sorted(out_dir.glob("*_eval_records.jsonl")):
        eval_records.extend(read_records(path))
    if eval_records:
        (out_dir / "curves.csv").write_text(emit_curves(eval_records))


def cmd_report(args) -> int:
    if not args.out:
        raise ConfigurationError("report needs --out DIR")
    out_dir = Path(args.out)
    if not out_dir.is_dir():
        raise ConfigurationError(f"{out_dir} is not a directory")
    if not list(out_dir.glob("*_report.json")):
        raise ConfigurationError(f"no reports found in {out_dir}")
    _emit_outputs(out_dir)
    print((out_dir / "results_table.txt").read_text(), end="")
    return 0


_COMMANDS = {
    "split": cmd_split,
    "tune": cmd_tune,
    "select": cmd_select,
    "eval": cmd_eval,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
