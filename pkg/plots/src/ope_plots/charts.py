"""Chart builders for experiment result CSVs.

Two inputs are understood, both plain comma-separated files with a
header row:

* experiment results, one row per (seed, configuration, estimator) with
  columns seed,n,L,reward_structure,interaction,lambda,estimator,
  estimate,ground_truth,squared_error;
* bootstrap outputs, one row per (replicate, estimator) with columns
  replicate,estimator,estimate,ground_truth,squared_error.

`plot_relative_mse` renders one line chart per reward structure, each
estimator's MSE expressed as a ratio against a reference estimator, and
`plot_box_se` renders per-estimator squared-error box plots on a log
axis. Charts are pure functions of the CSV contents.
"""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

__all__ = [
    "BOOTSTRAP_COLUMNS",
    "RESULTS_COLUMNS",
    "load_bootstrap_csv",
    "load_results_csv",
    "plot_box_se",
    "plot_relative_mse",
    "relative_mse_table",
]

RESULTS_COLUMNS = [
    "seed",
    "n",
    "L",
    "reward_structure",
    "interaction",
    "lambda",
    "estimator",
    "estimate",
    "ground_truth",
    "squared_error",
]

BOOTSTRAP_COLUMNS = [
    "replicate",
    "estimator",
    "estimate",
    "ground_truth",
    "squared_error",
]

X_VARIABLES = ("n", "L", "lambda")

# Squared errors below this floor are clipped before log scaling.
SE_FLOOR = 1e-12

_FORMATS = ("png", "svg")

_ESTIMATOR_ORDER = ("ips", "iips", "rips", "cascade_dr")


def _ordered_estimators(names: Sequence[str]) -> list[str]:
    known = [e for e in _ESTIMATOR_ORDER if e in names]
    extra = sorted(set(names) - set(_ESTIMATOR_ORDER))
    return known + extra


def _check_columns(frame: pd.DataFrame, expected: Sequence[str], path) -> None:
    if list(frame.columns) != list(expected):
        raise ValueError(
            f"{path}: unexpected columns {list(frame.columns)}, expected {list(expected)}"
        )


def load_results_csv(path) -> pd.DataFrame:
    """Read an experiment results CSV, validating the documented header."""
    frame = pd.read_csv(path)
    _check_columns(frame, RESULTS_COLUMNS, path)
    if frame.empty:
        raise ValueError(f"{path}: no data rows")
    return frame


def load_bootstrap_csv(path) -> pd.DataFrame:
    """Read a bootstrap output CSV, validating the documented header."""
    frame = pd.read_csv(path)
    _check_columns(frame, BOOTSTRAP_COLUMNS, path)
    if frame.empty:
        raise ValueError(f"{path}: no data rows")
    return frame


def relative_mse_table(
    frame: pd.DataFrame, x: str = "n", reference: str = "cascade_dr"
) -> pd.DataFrame:
    """Per (reward_structure, x, estimator) MSE and its ratio to `reference`.

    The reference estimator must be present in every (structure, x)
    group; its own ratio is identically 1.
    """
    if x not in X_VARIABLES:
        raise ValueError(f"x must be one of {X_VARIABLES}, got {x!r}")
    grouped = (
        frame.groupby(["reward_structure", x, "estimator"])["squared_error"]
        .mean()
        .rename("mse")
        .reset_index()
    )
    ref = grouped[grouped["estimator"] == reference][["reward_structure", x, "mse"]]
    merged = grouped.merge(
        ref.rename(columns={"mse": "reference_mse"}), on=["reward_structure", x], how="left"
    )
    if merged["reference_mse"].isna().any():
        missing = merged[merged["reference_mse"].isna()][["reward_structure", x]]
        first = missing.iloc[0].tolist()
        raise ValueError(f"group {first} has no {reference!r} rows to normalize against")
    merged["relative_mse"] = merged["mse"] / merged["reference_mse"]
    return merged[["reward_structure", x, "estimator", "mse", "relative_mse"]]


def _facet_paths(output, structure: str) -> list[Path]:
    output = Path(output)
    stem = output.stem if output.suffix else output.name
    return [output.with_name(f"{stem}_{structure}.{fmt}") for fmt in _FORMATS]


def plot_relative_mse(
    input_path,
    output_path,
    x: str = "n",
    reference: str = "cascade_dr",
    log_y: bool = False,
) -> list[Path]:
    """Render one relative-MSE line chart per reward structure.

    Output files are named ``<output stem>_<structure>.<ext>`` in both
    PNG and SVG. Structures with no rows are skipped with a warning.
    Returns the written paths.
    """
    frame = load_results_csv(input_path)
    table = relative_mse_table(frame, x=x, reference=reference)
    written: list[Path] = []
    for structure, facet in table.groupby("reward_structure"):
        if facet.empty:
            warnings.warn(f"no rows for reward structure {structure!r}; skipping facet")
            continue
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for estimator in _ordered_estimators(facet["estimator"].unique()):
            series = facet[facet["estimator"] == estimator].sort_values(x)
            ax.plot(series[x], series["relative_mse"], marker="o", label=estimator)
        ax.axhline(1.0, color="gray", linestyle="--", linewidth=1.0)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(x)
        ax.set_ylabel(f"MSE relative to {reference}")
        ax.set_title(f"reward structure: {structure}")
        ax.legend()
        fig.tight_layout()
        for path in _facet_paths(output_path, structure):
            fig.savefig(path)
            written.append(path)
        plt.close(fig)
    if not written:
        warnings.warn(f"{input_path}: no reward-structure facets to plot")
    return written


def plot_box_se(input_path, output_path, floor: float = SE_FLOOR) -> list[Path]:
    """Render per-estimator squared-error box plots on a log axis.

    Squared errors are clipped from below at `floor` so zero errors
    survive the log scale. Emits PNG and SVG; returns the written paths.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    frame = load_bootstrap_csv(input_path)
    estimators = _ordered_estimators(frame["estimator"].unique())
    data = [
        np.maximum(frame.loc[frame["estimator"] == e, "squared_error"].to_numpy(), floor)
        for e in estimators
    ]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.boxplot(data, tick_labels=estimators)
    ax.set_yscale("log")
    ax.set_ylabel("squared error")
    fig.tight_layout()
    output = Path(output_path)
    stem = output.stem if output.suffix else output.name
    written = [output.with_name(f"{stem}.{fmt}") for fmt in _FORMATS]
    for path in written:
        fig.savefig(path)
    plt.close(fig)
    return written
