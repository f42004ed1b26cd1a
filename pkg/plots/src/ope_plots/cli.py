"""Command-line entry points for figure generation.

Subcommands
-----------
relative-mse
    One line chart per reward structure from an experiment results CSV,
    each estimator's MSE plotted relative to a reference estimator.
box-se
    Per-estimator squared-error box plots (log axis) from a bootstrap
    output CSV.

Exit codes: 0 on success, 1 on validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import functools
import sys

import click

from ope_plots.charts import SE_FLOOR, X_VARIABLES, plot_box_se, plot_relative_mse

__all__ = ["main"]


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except ValueError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Render experiment result CSVs as figures."""


@main.command("relative-mse")
@click.option("--input", "input_path", type=click.Path(), required=True, help="Experiment results CSV.")
@click.option("--output", "output_path", type=click.Path(), required=True, help="Output base path; one image pair per reward structure is written next to it.")
@click.option("--x", "x", type=click.Choice(X_VARIABLES), default="n", show_default=True, help="Grid variable on the x axis.")
@click.option("--reference", default="cascade_dr", show_default=True, help="Estimator the MSE ratios are taken against.")
@click.option("--log-y", is_flag=True, help="Log-scale the ratio axis.")
@_handle_errors
def relative_mse(input_path, output_path, x, reference, log_y):
    """Relative-MSE line charts, one facet per reward structure."""
    written = plot_relative_mse(input_path, output_path, x=x, reference=reference, log_y=log_y)
    for path in written:
        click.echo(f"wrote {path}")


@main.command("box-se")
@click.option("--input", "input_path", type=click.Path(), required=True, help="Bootstrap output CSV.")
@click.option("--output", "output_path", type=click.Path(), required=True, help="Output base path (PNG and SVG are written).")
@click.option("--floor", type=float, default=SE_FLOOR, show_default=True, help="Lower clip applied to squared errors before log scaling.")
@_handle_errors
def box_se(input_path, output_path, floor):
    """Squared-error box plots on a log axis."""
    written = plot_box_se(input_path, output_path, floor=floor)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
