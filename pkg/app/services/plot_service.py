# app/services/plot_service.py

from __future__ import annotations

import csv
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from app.schemas.experiments import PlotSpec  # noqa: E402

logger = logging.getLogger(__name__)


class PlotError(ValueError):
    """Raised when a CSV cannot be plotted as requested."""


def _read_columns(csv_path: Path) -> dict[str, np.ndarray]:
    if not csv_path.is_file():
        raise PlotError(f"CSV file does not exist: {csv_path}")
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise PlotError(f"{csv_path} has no header row")
        rows = [row for row in reader if row]
    try:
        data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    except ValueError as exc:
        raise PlotError(f"{csv_path} is not a numeric table: {exc}") from exc
    return {name: data[:, i] for i, name in enumerate(header)}


def emit_plot(csv_path: Path, spec: PlotSpec) -> Path:
    """
    Line plot of spec.y against spec.x, one curve per y column, written as
    SVG to spec.output. Rows are first filtered by spec.where
    (column -> required value).
    """
    columns = _read_columns(csv_path)
    wanted = [spec.x, *spec.y, *spec.where]
    missing = [name for name in wanted if name not in columns]
    if missing:
        raise PlotError(
            f"{csv_path.name} has no column(s) {', '.join(missing)}; available: {', '.join(columns)}"
        )

    mask = np.ones(len(columns[spec.x]), dtype=bool)
    for name, value in spec.where.items():
        mask &= columns[name] == value
    if not mask.any():
        raise PlotError(f"no rows to plot in {csv_path.name} (empty series)")

    fig, ax = plt.subplots(figsize=(8.2, 4.3))
    try:
        x = columns[spec.x][mask]
        for name in spec.y:
            ax.plot(x, columns[name][mask], label=name, linewidth=1.5)
        if spec.log_y:
            ax.set_yscale("log", nonpositive="mask")
        ax.set_xlabel(spec.xlabel or ("scaled time t" if spec.x == "t" else spec.x))
        ax.set_ylabel(spec.ylabel or (spec.y[0] if len(spec.y) == 1 else "value"))
        if spec.title:
            ax.set_title(spec.title)
        ax.grid(True, alpha=0.3)
        if len(spec.y) > 1:
            ax.legend(loc="best")
        spec.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.output, format="svg", bbox_inches="tight")
    finally:
        plt.close(fig)

    logger.info("Wrote plot %s", spec.output)
    return spec.output


def default_plot_specs(
    out_dir: Path, csv_columns: dict[str, list[str]], weight_id: int = 0
) -> list[tuple[Path, PlotSpec]]:
    """
    Standard figures for a run directory, given the header of every CSV in
    it: loss curves on a log axis, Δ(t) curves, and one weight's
    trajectories.
    """
    specs: list[tuple[Path, PlotSpec]] = []
    loss_cols = csv_columns.get("loss.csv", [])
    if len(loss_cols) > 1:
        y = [c for c in loss_cols[1:] if "stderr" not in c]
        specs.append((out_dir / "loss.csv", PlotSpec(y=y, log_y=True, ylabel="loss U", output=out_dir / "loss.svg")))
    delta_cols = csv_columns.get("delta.csv", [])
    if len(delta_cols) > 1:
        specs.append((out_dir / "delta.csv", PlotSpec(y=delta_cols[1:], ylabel="Δ(t)", output=out_dir / "delta.svg")))
    ts_cols = csv_columns.get("timeseries.csv", [])
    if "gd_value" in ts_cols:
        y = [c for c in ts_cols if c.startswith("evo_sample_")] + ["evo_mean", "gd_value"]
        specs.append(
            (
                out_dir / "timeseries.csv",
                PlotSpec(
                    y=y,
                    where={"weight_id": weight_id},
                    ylabel=f"weight {weight_id}",
                    output=out_dir / f"timeseries_w{weight_id}.svg",
                ),
            )
        )
    return specs
