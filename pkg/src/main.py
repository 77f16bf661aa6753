"""Command-line front end: list, run and tabulate certification scenarios."""
import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from src import catalogue
from src.config import settings
from src.exceptions import AccretiaError, ConfigLoadError, ScenarioError, SolverError
from src.log import configure_logging, get_logger
from src.schemas import ScenarioConfig
from src.services import certify, reporting
from src.services.factory import build_scenario

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3

RATE_TABLE_HEADER = ["eps", "phi", "first_entry", "slack_ratio", "status"]


# ============== Config loading ==============

def _line_of(text: str, loc: Sequence) -> int:
    """Best line for a pydantic error location: follow successive "key" occurrences."""
    pos = 0
    for key in loc:
        if isinstance(key, str):
            found = text.find(f'"{key}"', pos)
            if found >= 0:
                pos = found
    return text.count("\n", 0, pos) + 1


def load_config(target: str) -> ScenarioConfig:
    """
    Load a scenario from a JSON file, or from the catalogue when no such file exists.

    Raises ConfigLoadError with a "path:line:column" anchored message for malformed
    JSON and schema violations, and ScenarioError for unknown ids.
    """
    path = Path(target)
    if not path.is_file():
        if catalogue.has_scenario(target):
            return catalogue.get_scenario(target)
        raise ScenarioError(f"'{target}' is neither a config file nor a bundled scenario")

    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigLoadError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for error in exc.errors():
            where = ".".join(str(part) for part in error["loc"]) or "<root>"
            lines.append(f"{path}:{_line_of(text, error['loc'])}: {where}: {error['msg']}")
        raise ConfigLoadError("\n".join(lines)) from exc


def _eps_list(value: str) -> list[float]:
    try:
        eps = [float(part) for part in value.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid eps list '{value}'") from exc
    if not eps or any(not e > 0 for e in eps):
        raise argparse.ArgumentTypeError("eps values must be positive")
    return eps


# ============== Commands ==============

def cmd_list(args: argparse.Namespace) -> int:
    for entry in catalogue.list_scenarios():
        print(f"{entry.id} → {entry.theorem_label}  [{entry.expected}]")
    return EXIT_OK


def cmd_schema(args: argparse.Namespace) -> int:
    print(json.dumps(ScenarioConfig.model_json_schema(), indent=2))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    report = certify.run_scenario(
        config,
        out_dir=args.out,
        seed=args.seed,
        horizon=args.horizon,
        eps_grid=args.eps,
    )

    # 1. Verdicts
    print(f"{report.scenario_id} ({report.theorem}), horizon {report.horizon}")
    if report.rejected:
        print("rejected: declared hypotheses do not hold")
    for entry in report.entries:
        print(f"  eps={entry.eps:g}  phi={entry.phi}  first_entry={entry.first_entry}  {entry.status}")
        for example in entry.counterexamples:
            print(f"    counterexample n={example.n} residual={example.residual:.6g}")

    # 2. Hypothesis checks and notes
    for violation in report.hypothesis_violations:
        print(f"  violation [{violation.check}] {violation.message}")
    for note in report.notes:
        print(f"  note: {note}")

    # 3. Artifacts
    out_dir = args.out
    if not report.rejected:
        print(f"trace:  {reporting.resolve_output(config.output.trace_csv, out_dir, f'{config.id}-trace.csv')}")
    print(f"report: {reporting.resolve_output(config.output.report_json, out_dir, f'{config.id}-report.json')}")
    return report.exit_code


def cmd_rate_table(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    bundle = build_scenario(config, horizon=args.horizon, eps_grid=args.eps)
    violations = certify.preflight(bundle, np.random.default_rng(args.seed))
    if violations:
        print(f"{config.id}: rejected: declared hypotheses do not hold", file=sys.stderr)
        for violation in violations:
            print(f"  violation [{violation.check}] {violation.message}", file=sys.stderr)
        return EXIT_FAILED

    trace = bundle.run()
    report = certify.certify(trace, bundle.rate, bundle.eps_grid, scenario_id=config.id, theorem=config.theorem)

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(RATE_TABLE_HEADER)
    for entry in report.entries:
        writer.writerow([
            reporting.format_float(entry.eps),
            entry.phi,
            "" if entry.first_entry is None else entry.first_entry,
            "" if entry.slack_ratio is None else reporting.format_float(entry.slack_ratio),
            entry.status,
        ])
    return report.exit_code


# ============== Entry point ==============

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accretia",
        description="Certify rates of convergence for accretive-operator iterations.",
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level (default: %(default)s)")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("list-scenarios", help="list bundled scenarios").set_defaults(handler=cmd_list)
    commands.add_parser("schema", help="print the scenario JSON schema").set_defaults(handler=cmd_schema)

    scenario_options = argparse.ArgumentParser(add_help=False)
    scenario_options.add_argument("config", help="path to a JSON config or a bundled scenario id")
    scenario_options.add_argument("--horizon", type=int, default=None, help="number of iteration steps")
    scenario_options.add_argument("--seed", type=int, default=settings.SEED, help="seed for sampled checks only")
    scenario_options.add_argument("--out", type=Path, default=settings.OUT, help="artifact directory")

    run = commands.add_parser("run", parents=[scenario_options], help="certify a scenario and write artifacts")
    run.add_argument("--eps", type=_eps_list, default=None, help="comma-separated eps grid")
    run.set_defaults(handler=cmd_run)

    table = commands.add_parser("rate-table", parents=[scenario_options], help="print phi and observed first entries")
    table.add_argument("--eps", type=_eps_list, default=None, help="comma-separated eps values")
    table.set_defaults(handler=cmd_rate_table)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except SolverError as exc:
        logger.error("solver failure: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AccretiaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
