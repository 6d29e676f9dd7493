"""Exact simulation of perfect-completeness quantum proof systems."""

import logging
import sys
from pathlib import Path
from typing import NoReturn

import click

from .harness import (
    RENDERERS,
    EmptySuiteError,
    Mode,
    RunSettings,
    ScenarioError,
    ScenarioParseError,
    ScenarioReport,
    ScenarioValidationError,
    describe,
    list_presets,
    load_scenario,
    run_scenario,
    run_suite,
)
from .quantum_core import (
    BudgetExceededError,
    DimensionMismatchError,
    InvalidOperatorError,
    InvalidParameterError,
    InvalidStateError,
    PreconditionError,
    QProofError,
    UnknownRegisterError,
)

__all__ = [
    "main",
    "run_scenario",
    "run_suite",
    "QProofError",
    "DimensionMismatchError",
    "UnknownRegisterError",
    "InvalidStateError",
    "InvalidOperatorError",
    "InvalidParameterError",
    "BudgetExceededError",
    "PreconditionError",
    "ScenarioError",
    "ScenarioParseError",
    "ScenarioValidationError",
    "EmptySuiteError",
]

EXIT_ASSERTION_FAILED = 1
EXIT_INVALID_SCENARIO = 2
EXIT_BUDGET_EXCEEDED = 3
EXIT_EMPTY_SUITE = 4


def _exit_status(error: QProofError) -> int:
    if isinstance(error, BudgetExceededError):
        return EXIT_BUDGET_EXCEEDED
    if isinstance(error, EmptySuiteError):
        return EXIT_EMPTY_SUITE
    return EXIT_INVALID_SCENARIO


def _fail(error: QProofError) -> NoReturn:
    click.echo(f"Error: {error}", err=True)
    sys.exit(_exit_status(error))


def _emit(
    reports: list[ScenarioReport], output_format: str, out: Path | None, timing: bool
) -> None:
    rendered = RENDERERS[output_format](reports, timing)
    if out is not None:
        out.write_text(rendered, encoding="utf-8")
    click.echo(rendered, nl=False)


def _settings(mode: str | None, seed: int | None, shots: int | None) -> RunSettings:
    return RunSettings(Mode(mode) if mode else None, seed, shots)


_run_options = [
    click.option("--mode", type=click.Choice([m.value for m in Mode]), default=None),
    click.option("--seed", type=int, default=None, help="Generator seed (PCG64)."),
    click.option("--shots", type=click.IntRange(min=1), default=None),
    click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None),
    click.option(
        "--format", "output_format", type=click.Choice(sorted(RENDERERS)), default="text"
    ),
    click.option("--timing", is_flag=True, help="Include elapsed time in reports."),
]


def run_options(command: click.Command) -> click.Command:
    """Attach the options shared by ``run`` and ``suite``."""
    for option in reversed(_run_options):
        command = option(command)
    return command


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose: int) -> None:
    """Run quantum proof-system scenarios and report exact probabilities.

    Args:
        verbose: Verbosity level (0=WARN, 1=INFO, 2+=DEBUG).
    """
    logging_level = logging.WARN
    if verbose == 1:
        logging_level = logging.INFO
    elif verbose >= 2:
        logging_level = logging.DEBUG

    logging.basicConfig(level=logging_level, stream=sys.stderr)


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@run_options
def run(
    path: Path,
    mode: str | None,
    seed: int | None,
    shots: int | None,
    out: Path | None,
    output_format: str,
    timing: bool,
) -> None:
    """Run one scenario file."""
    try:
        report = run_scenario(path, _settings(mode, seed, shots))
    except QProofError as e:
        _fail(e)
    _emit([report], output_format, out, timing)
    if not report.passed:
        sys.exit(EXIT_ASSERTION_FAILED)


@main.command()
@click.argument(
    "directory",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    required=False,
)
@click.option("--filter", "pattern", default="*", help="Glob on scenario names.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, help="Worker threads.")
@run_options
def suite(
    directory: Path | None,
    pattern: str,
    jobs: int,
    mode: str | None,
    seed: int | None,
    shots: int | None,
    out: Path | None,
    output_format: str,
    timing: bool,
) -> None:
    """Run every scenario in a directory (default: $QPROOF_SCENARIO_DIR)."""
    try:
        report = run_suite(directory, pattern, _settings(mode, seed, shots), jobs)
    except QProofError as e:
        _fail(e)
    _emit(report.reports, output_format, out, timing)
    if not report.passed:
        for failure in report.failures:
            failed = [r.quantity for r in failure.assertions if not r.passed]
            click.echo(f"FAIL {failure.name}: {', '.join(failed)}", err=True)
        sys.exit(EXIT_ASSERTION_FAILED)


@main.command(name="list-presets")
def list_presets_command() -> None:
    """List verifier, prover, toy-system and checker names."""
    for category, names in list_presets().items():
        click.echo(f"{category}:")
        for name in names:
            click.echo(f"  {name}")


@main.command(name="describe")
@click.argument("path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def describe_command(path: Path) -> None:
    """Validate a scenario file and print its summary."""
    try:
        scenario = load_scenario(path)
    except QProofError as e:
        _fail(e)
    click.echo(describe(scenario), nl=False)


if __name__ == "__main__":  # pragma: no cover
    main()
