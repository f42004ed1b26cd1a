"""Figure generation for off-policy evaluation experiment CSVs."""

from ope_plots.charts import (
    BOOTSTRAP_COLUMNS,
    RESULTS_COLUMNS,
    load_bootstrap_csv,
    load_results_csv,
    plot_box_se,
    plot_relative_mse,
    relative_mse_table,
)

__all__ = [
    "BOOTSTRAP_COLUMNS",
    "RESULTS_COLUMNS",
    "load_bootstrap_csv",
    "load_results_csv",
    "plot_box_se",
    "plot_relative_mse",
    "relative_mse_table",
]
