# app/services/output_service.py

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np

from app import __version__
from app.ensemble.runner import EnsembleSummary
from app.ensemble.trajectory import TrajectoryRecord
from app.schemas.experiments import ExperimentConfig, RunManifest

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.16e"


@dataclass
class Table:
    """Column-oriented CSV content; integer columns are written without a decimal point."""

    columns: list[str]
    values: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.columns) != len(self.values):
            raise ValueError("columns and values differ in length")
        lengths = {len(v) for v in self.values}
        if len(lengths) > 1:
            raise ValueError(f"columns have different lengths: {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(self.values[0]) if self.values else 0


@dataclass
class PresetResult:
    """What one preset produced: CSV tables by file name, summary.json content and checks."""

    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    checks: dict[str, dict[str, Any]] = field(default_factory=dict)

    @property
    def checks_passed(self) -> bool:
        return all(check["passed"] for check in self.checks.values())


def _format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FORMAT % float(value)


def write_csv(path: Path, table: Table) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.columns)
        for row in zip(*table.values):
            writer.writerow([_format_cell(v) for v in row])
    logger.info("Wrote %s (%d rows)", path, table.n_rows)
    return path


def to_jsonable(value: Any) -> Any:
    """numpy values, paths and enums to plain JSON types; ±inf and NaN become strings."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return value
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


# ----------------------------------------------------------------------
# Tables built from ensemble results
# ----------------------------------------------------------------------

def timeseries_table(
    reference: TrajectoryRecord,
    summary: EnsembleSummary,
    weights: list[int],
) -> Table:
    """
    Long format: one row per (recorded time, tracked weight) with the
    descent value, the ensemble mean and every retained trajectory.
    """
    n_params = summary.mean_params.shape[1]
    bad = [w for w in weights if not 0 <= w < n_params]
    if bad:
        raise ValueError(f"tracked weight ids {bad} out of range for {n_params} parameters")
    n_records = summary.scaled_times.size
    t = np.repeat(summary.scaled_times, len(weights))
    ids = np.tile(np.asarray(weights, dtype=np.int64), n_records)
    columns = ["t", "weight_id", "gd_value", "evo_mean"]
    values = [
        t,
        ids,
        reference.param_snapshots[:, weights].reshape(-1),
        summary.mean_params[:, weights].reshape(-1),
    ]
    for i, record in enumerate(summary.samples, start=1):
        columns.append(f"evo_sample_{i}")
        values.append(record.param_snapshots[:, weights].reshape(-1))
    return Table(columns, values)


def lam_label(lam: float) -> str:
    return f"{lam:g}"


# ----------------------------------------------------------------------
# Run directory
# ----------------------------------------------------------------------

def write_result(out_dir: Path, result: PresetResult) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_csv(out_dir / name, table) for name, table in result.tables.items()]
    summary = dict(result.summary)
    if result.checks:
        summary["checks"] = result.checks
        summary["checks_passed"] = result.checks_passed
    written.append(write_json(out_dir / "summary.json", summary))
    return written


def build_manifest(
    config: ExperimentConfig,
    started_at: datetime,
    duration_s: float,
    files: list[Path],
    out_dir: Path,
    checks_passed: Optional[bool] = None,
) -> RunManifest:
    return RunManifest(
        config=json.loads(config.model_dump_json()),
        version=__version__,
        master_seed=config.master_seed,
        init_seed=config.init_seed,
        started_at=started_at,
        duration_s=duration_s,
        files=sorted(str(p.relative_to(out_dir)) for p in files),
        python_version=platform.python_version(),
        numpy_version=np.__version__,
        checks_passed=checks_passed,
    )


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    path = out_dir / "manifest.json"
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path
