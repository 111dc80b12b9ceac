# app/ensemble/reset.py

from __future__ import annotations

import logging

import numpy as np

from app.ensemble.metrics import check_same_grid
from app.ensemble.runner import DEFAULT_CHUNK_SIZE, EnsembleSummary, run_ensemble
from app.ensemble.scaling import map_time, time_per_step
from app.ensemble.trajectory import ResetPlan, TrajectoryRecord, TrajectorySpec

logger = logging.getLogger(__name__)


def reset_protocol(
    gd_record: TrajectoryRecord,
    spec: TrajectorySpec,
    period: float,
    n: int,
    master_seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    n_samples: int = 0,
) -> EnsembleSummary:
    """
    Every `period` units of scaled time, overwrite all trajectories with the
    reference (gradient-descent) state, then let them evolve freely.

    Averages are windowed: each window's statistics start from the shared
    reset state, so Δ is exactly zero at every reset. spec.steps fixes the
    total duration and must match the reference record's grid.
    """
    if not period > 0:
        raise ValueError(f"period must be > 0, got {period}")
    kind, scaling = spec.dynamics.kind, spec.dynamics.scaling
    record_span = spec.record_stride * time_per_step(scaling, kind)
    window_records = round(period / record_span)
    if window_records < 1 or abs(window_records * record_span - period) > 1e-9 * period:
        raise ValueError(
            f"period {period!r} must be a positive multiple of the recording interval {record_span!r}"
        )
    if spec.steps % (window_records * spec.record_stride):
        raise ValueError("total duration must be a whole number of reset periods")

    window_steps = window_records * spec.record_stride
    n_windows = spec.steps // window_steps
    grid = np.asarray(map_time(spec.record_stride * np.arange(spec.steps // spec.record_stride + 1), scaling, kind))
    check_same_grid(gd_record.scaled_times, grid)

    reset_indices = window_records * np.arange(n_windows)
    plan = ResetPlan(anchors=gd_record.param_snapshots[reset_indices], window_steps=window_steps)
    # Each record is averaged as a deviation from the state its window was reset to.
    window_of_record = np.minimum(np.arange(grid.size) // window_records, n_windows - 1)
    shift = plan.anchors[window_of_record]

    logger.info(
        "Reset protocol: period=%g, windows=%d, n=%d, dynamics=%s",
        period, n_windows, n, kind.value,
    )
    summary = run_ensemble(
        spec,
        n,
        master_seed,
        workers=workers,
        chunk_size=chunk_size,
        n_samples=n_samples,
        reference=gd_record,
        reset=plan,
        shift=shift,
    )
    summary.reset_indices = reset_indices
    return summary
