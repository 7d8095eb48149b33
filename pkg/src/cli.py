"""Command-line front end: one subcommand per service plus run, suite and list."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, get_args

from .config import settings
from .errors import AdeleTraceError, ConfigError
from .runner import (
    PARAMETERS,
    SUITES,
    ExperimentConfig,
    RunRecord,
    list_operations,
    run,
    suite,
    summary_rows,
    write_record,
)

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignments(items: list[str]) -> dict[str, Any]:
    """["function.p=3", "n=[2,4]"] -> {"function": {"p": 3}, "n": [2, 4]}."""
    params: dict[str, Any] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {item!r}", key=item)
        target = params
        *parents, leaf = key.split(".")
        for part in parents:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"{part} is both a value and a section", key=key)
        target[leaf] = _parse_value(value)
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adele-trace",
        description="Numerical checks of the trace formula and its local and global companions.",
    )
    parser.add_argument("--log-level", default=None, help="Override ADELE_TRACE_LOG_LEVEL")
    parser.add_argument(
        "--output", type=Path, default=None, help="Directory for JSON/CSV records"
    )
    parser.add_argument(
        "--no-write", action="store_true", help="Print the record without writing files"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="Run an experiment config file")
    run_parser.add_argument("config", type=Path)

    suite_parser = sub.add_parser("suite", help="Run a named acceptance suite")
    suite_parser.add_argument("name", choices=sorted(SUITES))
    suite_parser.add_argument("--workers", type=int, default=None)

    sub.add_parser("list", help="List every operation and its subcommand")

    for name, model in PARAMETERS.items():
        ops = get_args(model.model_fields["op"].annotation)
        op_parser = sub.add_parser(name, help=f"Operations: {', '.join(ops)}")
        op_parser.add_argument("op", choices=ops)
        op_parser.add_argument(
            "--param",
            "-p",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Parameter assignment; values are parsed as JSON when possible",
        )
        op_parser.add_argument("--tolerance", type=float, default=None)
        op_parser.add_argument("--seed", type=int, default=0)
        op_parser.add_argument("--name", default=None)
        op_parser.add_argument(
            "--save-config", type=Path, default=None, help="Write the resolved config here"
        )
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: dict[str, Any] = {
        "subcommand": args.command,
        "params": parse_assignments(args.param) | {"op": args.op},
        "seed": args.seed,
        "name": args.name,
    }
    if args.tolerance is not None:
        data["tolerance"] = args.tolerance
    if args.output is not None:
        data["output_dir"] = str(args.output)
    return ExperimentConfig.from_mapping(data)


def _emit(record: RunRecord, output: Path | None, write: bool) -> None:
    print(json.dumps(record.model_dump(mode="json"), indent=2, sort_keys=True))
    if write:
        write_record(record, output)


def _print_summary(records: list[RunRecord]) -> None:
    rows = summary_rows(records)
    width = max(len(r["name"]) for r in rows)
    for row in rows:
        status = "pass" if row["passed"] else "FAIL"
        line = f"{row['name']:<{width}}  {status}  {row['wall_time']:>8.3f}s  {row['op']}"
        if row["error"]:
            line += f"  ({row['error']})"
        print(line)


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "list":
        for operation, command in list_operations().items():
            print(f"{operation:<45} adele-trace {command}")
        return EXIT_PASS

    if args.command == "suite":
        records = suite(args.name, args.workers)
        if not args.no_write:
            for record in records:
                write_record(record, args.output)
        _print_summary(records)
        return EXIT_PASS if all(r.passed for r in records) else EXIT_FAIL

    if args.command == "run":
        config = ExperimentConfig.load(args.config)
    else:
        config = config_from_args(args)
        if args.save_config is not None:
            config.save(args.save_config)
    record = run(config)
    _emit(record, args.output or config.output_dir, not args.no_write)
    return EXIT_PASS if record.passed else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    try:
        return dispatch(args)
    except AdeleTraceError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=settings.debug)
        context = "; ".join(getattr(e, "__notes__", []))
        print(f"error: {e}" + (f" ({context})" if context else ""), file=sys.stderr)
        return EXIT_ERROR


def cli():
    """Console entry point."""
    sys.exit(main())


if __name__ == "__main__":
    cli()
