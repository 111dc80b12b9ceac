from app.ensemble.metrics import (
    GridMismatchError,
    delta_metric,
    expected_mean_loss_rate,
    expected_rate_along,
    mean_loss_rate,
    mean_loss_rate_stderr,
)
from app.ensemble.reset import reset_protocol
from app.ensemble.runner import (
    EnsembleSummary,
    ensemble_size_sweep,
    run_ensemble,
    split_seed,
    summarize_records,
)
from app.ensemble.scaling import (
    derive_sigma,
    map_time,
    record_stride,
    resolve_sigma,
    steps_for,
    time_per_step,
)
from app.ensemble.trajectory import (
    DivergenceError,
    Objective,
    ResetPlan,
    TrajectoryRecord,
    TrajectorySpec,
    run_reset_trajectory,
    run_trajectory,
)

__all__ = [
    "DivergenceError",
    "EnsembleSummary",
    "GridMismatchError",
    "Objective",
    "ResetPlan",
    "TrajectoryRecord",
    "TrajectorySpec",
    "ensemble_size_sweep",
    "delta_metric",
    "derive_sigma",
    "expected_mean_loss_rate",
    "expected_rate_along",
    "map_time",
    "mean_loss_rate",
    "mean_loss_rate_stderr",
    "record_stride",
    "reset_protocol",
    "resolve_sigma",
    "run_ensemble",
    "run_reset_trajectory",
    "run_trajectory",
    "split_seed",
    "summarize_records",
    "steps_for",
    "time_per_step",
]
