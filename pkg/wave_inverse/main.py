"""Command-line entry point: ``python -m wave_inverse.main <command>``."""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import Any

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from . import artifacts
from .errors import CONFIGURATION_ERRORS, InversionError
from .models import ENV_PREFIX, PipelineConfig, load_pipeline_config, with_overrides
from .selftest import run_selftest
from .workflow import InversionWorkflow, summarize

logger = logging.getLogger("wave_inverse")

EXIT_NUMERICAL = 1
EXIT_CONFIGURATION = 2


def configure_logging(verbose: bool) -> None:
    level = "DEBUG" if verbose else os.getenv(f"{ENV_PREFIX}LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def guarded(command: Callable[..., None]) -> Callable[..., None]:
    """Turn library exceptions into one ``ERROR:`` line and the documented exit code."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            command(*args, **kwargs)
        except (*CONFIGURATION_ERRORS, ValidationError, FileNotFoundError) as error:
            click.echo(f"ERROR: {error}", err=True)
            sys.exit(EXIT_CONFIGURATION)
        except InversionError as error:
            notes = "".join(f" ({note})" for note in getattr(error, "__notes__", []))
            click.echo(f"ERROR: {error}{notes}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


def _background(_ctx: click.Context, _param: click.Parameter, value: str | None) -> tuple[float, float] | None:
    if value is None:
        return None
    try:
        lo, hi = (float(part) for part in value.split(","))
    except ValueError as error:
        raise click.BadParameter("expected 'lo,hi'") from error
    return lo, hi


def _config(ctx: click.Context, overrides: Mapping[str, object]) -> PipelineConfig:
    config = load_pipeline_config(ctx.obj["config_path"])
    flags = dict(overrides)
    if ctx.obj["output_dir"] is not None:
        flags["output_dir"] = ctx.obj["output_dir"]
    return with_overrides(config, flags)


def _emit(payload: Mapping[str, object]) -> None:
    click.echo(json.dumps(payload, indent=2))


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="JSON pipeline configuration.")
@click.option("--output-dir", type=click.Path(path_type=Path), help="Directory for every written artifact.")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx: click.Context, config_path: Path | None, output_dir: Path | None, verbose: bool) -> None:
    """Two-stage convexification inversion of 1D wave boundary data."""
    load_dotenv()
    configure_logging(verbose)
    ctx.obj = {"config_path": config_path, "output_dir": str(output_dir) if output_dir else None}


@cli.command()
@click.option("--noise-level", type=float)
@click.option("--seed", type=int)
@click.option("--write-field", is_flag=True, help="Also write the full u(y, t) grid.")
@click.pass_context
@guarded
def simulate(ctx: click.Context, noise_level: float | None, seed: int | None, write_field: bool) -> None:
    """Forward-simulate boundary data g0, g1 for the configured model."""
    config = _config(ctx, {"noise.level": noise_level, "noise.seed": seed})
    workflow = InversionWorkflow(config)
    workflow.simulate(write_field=write_field)
    _emit({"output_dir": str(workflow.work_dir), "timings": workflow.report.timings})


@cli.command()
@click.argument("data", type=click.Path(path_type=Path))
@click.option("--polarity", type=click.Choice(["negative", "positive"]))
@click.option("--g1-mode", type=click.Choice(["envelope", "absorbing"]))
@click.pass_context
@guarded
def preprocess(ctx: click.Context, data: Path, polarity: str | None, g1_mode: str | None) -> None:
    """Fit envelopes to a t,g0,g1 CSV and write s0, s1 on the inversion time grid."""
    config = _config(ctx, {"preprocess.polarity": polarity, "preprocess.g1_mode": g1_mode})
    workflow = InversionWorkflow(config)
    derived = workflow.preprocess(artifacts.read_boundary_data(data))
    _emit({"output_dir": str(workflow.work_dir), "samples": derived.tgrid.count})


@cli.command()
@click.argument("derived", type=click.Path(path_type=Path))
@click.option("--lambda", "lambda_", type=float)
@click.option("--alpha", type=float)
@click.option("--gamma", type=float)
@click.option("--step", type=float, help="Initial gradient step.")
@click.option("--max-iterations", type=int)
@click.pass_context
@guarded
def invert(
    ctx: click.Context,
    derived: Path,
    lambda_: float | None,
    alpha: float | None,
    gamma: float | None,
    step: float | None,
    max_iterations: int | None,
) -> None:
    """Minimize the weighted functional for a t,s0,s1 CSV and write r(x)."""
    config = _config(
        ctx,
        {
            "carleman.lambda": lambda_,
            "carleman.alpha": alpha,
            "carleman.gamma": gamma,
            "stopping.initial_step": step,
            "stopping.max_iterations": max_iterations,
        },
    )
    workflow = InversionWorkflow(config)
    workflow.invert(artifacts.read_derived(derived))
    _emit(summarize(workflow.report))


@cli.command()
@click.argument("potential", type=click.Path(path_type=Path))
@click.option("--rho", type=float, help="Fixed weight parameter instead of the length schedule.")
@click.option("--background", callback=_background, help="Background dielectric interval 'lo,hi'.")
@click.option("--polarity-mode", type=click.Choice(["max", "min"]))
@click.pass_context
@guarded
def recover(
    ctx: click.Context,
    potential: Path,
    rho: float | None,
    background: tuple[float, float] | None,
    polarity_mode: str | None,
) -> None:
    """Recover c(y) from an x,r CSV."""
    config = _config(
        ctx,
        {
            "recovery.rho_override": rho,
            "recovery.background": background,
            "recovery.polarity_mode": polarity_mode,
        },
    )
    workflow = InversionWorkflow(config)
    workflow.recover(artifacts.read_potential(potential))
    _emit(summarize(workflow.report))


@cli.command()
@click.option("--noise-level", type=float)
@click.option("--seed", type=int)
@click.pass_context
@guarded
def pipeline(ctx: click.Context, noise_level: float | None, seed: int | None) -> None:
    """Simulate, preprocess, invert and recover; report errors against the model."""
    config = _config(ctx, {"noise.level": noise_level, "noise.seed": seed})
    report = InversionWorkflow(config).run_pipeline()
    _emit(summarize(report))


@cli.command()
@click.argument("trace", type=click.Path(path_type=Path))
@click.option("--polarity-mode", type=click.Choice(["max", "min"]))
@click.pass_context
@guarded
def experimental(ctx: click.Context, trace: Path, polarity_mode: str | None) -> None:
    """Invert one radar trace and estimate the target's dielectric constant."""
    config = _config(ctx, {"recovery.polarity_mode": polarity_mode})
    report = InversionWorkflow(config).run_experimental(artifacts.read_experimental(trace))
    _emit(summarize(report))


@cli.command()
@guarded
def selftest() -> None:
    """Run the quick invariant checks; exit 1 if any fails."""
    report = run_selftest()
    _emit(report.model_dump())
    if not report.passed:
        sys.exit(EXIT_NUMERICAL)


def main() -> None:
    cli(prog_name="wave-inverse")


if __name__ == "__main__":
    main()
