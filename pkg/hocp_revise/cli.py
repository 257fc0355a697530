import functools
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import click
from click_default_group import DefaultGroup
from rich.console import Console
from rich.logging import RichHandler

from . import artifacts, chs, fit, models, revise
from .relax import DEFAULT_ZETA
from .sim import (
    PolynomialControl,
    load_control,
    simulate,
    write_events_csv,
    write_trajectory_csv,
)

LOG_LEVEL = os.environ.get("HOCPREVISE_LOGLEVEL", "WARNING").upper()

DEFAULT_MODEL = "heme"
DEFAULT_FAMILIES = "step,piecewise_poly,hill"


class PartialChoice(click.types.ParamType):
    def __init__(self, name, get_choices, **kwargs):
        self.name = name
        self._get_choices = get_choices
        super().__init__(**kwargs)

    @property
    def choices(self):
        return self._get_choices()

    def convert(self, value, param, ctx):
        if value in self.choices:
            return value
        matches = [choice for choice in self.choices if choice.startswith(value)]
        if len(matches) == 1:
            return matches[0]
        if matches:
            return self.fail(
                f"ambiguous choice: {value}. (could be {', '.join(matches)})", param, ctx
            )
        return self.fail(
            f"invalid choice: {value}. (choose from {', '.join(self.choices)})",
            param,
            ctx,
        )


FAMILY_CHOICE = PartialChoice(name="FAMILY", get_choices=lambda: list(fit.FAMILIES))


@dataclass
class RunConfig:
    model: str
    data: str | None
    revision: revise.RevisionConfig
    out: Path


def configure_logging(verbosity):
    level = {0: LOG_LEVEL, 1: "INFO"}.get(verbosity, "DEBUG")
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@click.group(cls=DefaultGroup, default="revise", default_if_no_args=True)
@click.version_option()
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for debug output).")
def cli(verbose):
    configure_logging(verbose)


def with_model(require_data=True):
    def decorate(command):
        @click.option(
            "-m",
            "--model",
            default=DEFAULT_MODEL,
            help="Built-in model name or model file. Run `hocprevise models` to list them.",
        )
        @click.option("-d", "--data", help="CSV of `time,value` data points.")
        @functools.wraps(command)
        def wrapper(*args, model, data, **kwargs):
            system = models.load_model(model)
            points = None
            if require_data or data or models.builtin(model):
                points = models.load_data(data, system, model)
            return command(
                *args, system=system, points=points, model=model, data=data, **kwargs
            )

        return wrapper

    return decorate


def output_option(command):
    return click.option(
        "-o",
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        help="Output directory (default: $HOCPREVISE_OUT or ./revision-out).",
    )(command)


def order_options(command):
    command = click.option(
        "--max-order", type=int, help="Highest relaxation order (default: max(4, --order))."
    )(command)
    return click.option(
        "-r", "--order", type=int, default=2, show_default=True, help="Starting relaxation order."
    )(command)


def _echo_windows(result):
    for window in result.windows:
        click.echo(
            f"window {window.index} [{window.span[0]:g}, {window.span[1]:g}] "
            f"{window.status}: err={window.error:.6g} lower_bound={window.lower_bound:.6g} "
            f"order={window.order} degree={window.degree}"
        )


def _revise(run, system, points):
    cfg = run.revision
    click.echo(f"revising {system.name or run.model} on {len(points)} data points")
    result = revise.run(system, points, cfg=cfg)
    directory = revise.write_revision(result, run.out)
    _echo_windows(result)
    click.echo(f"epsilon_total: {result.epsilon_total:.6g}")
    click.echo(f"written to {directory}")
    return result


@cli.command(name="revise", help="Revise the model against its data, window by window.")
@with_model()
@order_options
@click.option(
    "-e",
    "--epsilon",
    type=float,
    default=0.0,
    show_default=True,
    help="Accept a window once its squared error drops below this.",
)
@click.option(
    "--zeta",
    type=float,
    default=DEFAULT_ZETA,
    show_default=True,
    help="Input scale u = zeta * v inside the relaxation.",
)
@click.option(
    "--scaling",
    type=click.Choice(revise.SCALINGS),
    default="reference",
    show_default=True,
    help="Fit state and input scales to a reference trajectory or to the domain boxes.",
)
@click.option(
    "--max-moments",
    type=int,
    default=6000,
    show_default=True,
    help="Skip relaxation orders with more moments than this.",
)
@click.option(
    "--solver",
    type=click.Choice(revise.SOLVERS),
    default="embedded",
    show_default=True,
    help="Solve in process or only export SDPA files.",
)
@click.option(
    "--dump-layouts", is_flag=True, help="Write the measure layout of every build."
)
@output_option
def revise_command(
    system,
    points,
    model,
    data,
    order,
    max_order,
    epsilon,
    zeta,
    scaling,
    max_moments,
    solver,
    dump_layouts,
    out,
):
    out = artifacts.output_dir(out)
    cfg = revise.RevisionConfig(
        epsilon=epsilon,
        order=order,
        max_order=max_order or max(4, order),
        zeta=zeta,
        scaling=scaling,
        max_moments=max_moments,
        solver=solver,
        export_dir=out / "sdpa",
        layout_dir=out / "layouts" if dump_layouts else None,
    )
    _revise(RunConfig(model, data, cfg, out), system, points)


@cli.command(name="export-sdpa", help="Write every window relaxation as an SDPA file.")
@with_model()
@order_options
@click.option("--zeta", type=float, default=DEFAULT_ZETA, show_default=True)
@click.option("--scaling", type=click.Choice(revise.SCALINGS), default="reference")
@click.option("--max-moments", type=int, default=6000, show_default=True)
@output_option
def export_sdpa_command(
    system, points, model, data, order, max_order, zeta, scaling, max_moments, out
):
    out = artifacts.output_dir(out)
    cfg = revise.RevisionConfig(
        order=order,
        max_order=max_order or order,
        zeta=zeta,
        scaling=scaling,
        max_moments=max_moments,
        solver="export-sdpa",
        export_dir=out / "sdpa",
    )
    _revise(RunConfig(model, data, cfg, out), system, points)
    for path in sorted((out / "sdpa").glob("*.dat-s")):
        click.echo(path)


@cli.command(name="simulate", help="Simulate the model under a control (zero by default).")
@with_model(require_data=False)
@click.option(
    "-c",
    "--control",
    "control_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Control file written by `revise`.",
)
@output_option
def simulate_command(system, points, model, data, control_path, out):
    out = artifacts.output_dir(out)
    span = system.time_span()
    if control_path:
        control = load_control(control_path)
    else:
        control = PolynomialControl.zero(span, system.inputs)
    trajectory = simulate(system, control, system.initial, span, sample_step=fit.SAMPLE_STEP)
    write_trajectory_csv(trajectory, out / "trajectory.csv", system)
    write_events_csv(trajectory, out / "events.csv")
    mode, state = trajectory.final
    click.echo(f"t={span[1]:g} mode {mode}: " + " ".join(f"{v:.6g}" for v in state[1:]))
    if points:
        click.echo(f"epsilon_total: {revise.total_error(trajectory, points):.6g}")


def _families(ctx, param, value):
    names = [name.strip() for name in value.split(",") if name.strip()]
    if not names:
        raise click.BadParameter("give at least one family", ctx, param)
    return [FAMILY_CHOICE.convert(name, param, ctx) for name in names]


@cli.command(name="fit", help="Fit step, piecewise polynomial and Hill functions to a control.")
@with_model()
@click.option(
    "-c",
    "--control",
    "control_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Control file written by `revise`.",
)
@click.option(
    "-f",
    "--families",
    default=DEFAULT_FAMILIES,
    show_default=True,
    callback=_families,
    help="Comma separated families to fit.",
)
@click.option(
    "-b",
    "--breakpoint",
    "breakpoint_",
    type=float,
    default=fit.DEFAULT_BREAKPOINT,
    show_default=True,
    help="Piecewise polynomial breakpoint (h).",
)
@output_option
def fit_command(system, points, model, data, control_path, families, breakpoint_, out):
    out = artifacts.output_dir(out)
    control = load_control(control_path)
    span = (system.time_span()[0], points[-1].time)
    trajectory = simulate(system, control, system.initial, span, sample_step=fit.SAMPLE_STEP)
    samples = fit.sample_control(control, trajectory)
    bounds = tuple(system.inputs.bounds()[0])
    rows = [("revised", "", 0.0, revise.total_error(trajectory, points), ())]
    fitted = []
    trajectories = {"revised": trajectory}
    for family in families:
        f = fit.fit_family(family, samples, bounds=bounds, breakpoint=breakpoint_)
        error, driven = fit.evaluate_fit(system, f, points)
        fitted.append(f)
        trajectories[family] = driven
        rows.append((family, f.describe(), f.residual, error, f.flags))
    fit.write_fit_report(out / "fits.csv", rows)
    fit.write_plot_data(out / "plot.csv", samples, fitted, trajectory)
    fit.plot_controls(out / "controls.svg", samples, fitted)
    fit.plot_measurement(out / "measurement.svg", points, trajectories)
    for family, parameters, residual, error, flags in rows:
        flagged = f" [{' '.join(flags)}]" if flags else ""
        click.echo(f"{family:15} epsilon_total={error:.4f} residual={residual:.4g}{flagged}")
        if parameters:
            click.echo(f"{'':15} {parameters}")


@cli.command(name="validate", help="Check a model for structural problems.")
@with_model(require_data=False)
def validate_command(system, points, model, data):
    problems = chs.validate(system)
    for problem in problems:
        click.echo(problem, file=sys.stderr)
    if problems:
        sys.exit(1)
    click.echo(f"{model}: {len(system.modes)} modes, {len(system.transitions)} transitions, ok")


cli.add_command(models.models)


def main():
    try:
        cli()
    except FileNotFoundError as error:
        click.echo(f"{error.filename or error}: model not found", file=sys.stderr)
        sys.exit(1)
    except ValueError as error:
        click.echo(f"error: {error}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
