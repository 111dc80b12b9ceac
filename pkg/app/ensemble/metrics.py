# app/ensemble/metrics.py

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from app.schemas.dynamics import DynamicsConfig, TimeScaling

if TYPE_CHECKING:
    from app.ensemble.runner import EnsembleSummary
    from app.ensemble.trajectory import Objective, TrajectoryRecord

SQRT_2PI = math.sqrt(2.0 * math.pi)


class GridMismatchError(ValueError):
    """Raised when two records are not sampled on the same scaled-time grid."""


def check_same_grid(left: np.ndarray, right: np.ndarray) -> None:
    if left.shape != right.shape or not np.allclose(left, right, rtol=1e-9, atol=1e-12):
        raise GridMismatchError(
            f"scaled-time grids differ (lengths {left.size} and {right.size}); "
            "records must share the recording interval and duration, interpolation is not done"
        )


def delta_metric(reference: "TrajectoryRecord", summary: "EnsembleSummary") -> np.ndarray:
    """
    Δ(t) = (1/N) Σᵢ (xᵢ_ref(t) − ⟨xᵢ(t)⟩)².
    """
    check_same_grid(reference.scaled_times, summary.scaled_times)
    if reference.param_snapshots.shape != summary.mean_params.shape:
        raise GridMismatchError(
            f"parameter shapes differ: {reference.param_snapshots.shape} vs {summary.mean_params.shape}"
        )
    diff = reference.param_snapshots - summary.mean_params
    return np.mean(diff * diff, axis=1)


def mean_loss_rate(summary: "EnsembleSummary") -> np.ndarray:
    """
    Forward-difference estimate of d⟨U⟩/dt between consecutive records.
    """
    if summary.scaled_times.size < 2:
        raise ValueError("mean_loss_rate needs at least 2 recorded times")
    return np.diff(summary.mean_loss) / np.diff(summary.scaled_times)


def mean_loss_rate_stderr(summary: "EnsembleSummary") -> np.ndarray:
    if summary.scaled_times.size < 2:
        raise ValueError("mean_loss_rate_stderr needs at least 2 recorded times")
    return np.sqrt(summary.loss_increment_var / summary.n) / np.diff(summary.scaled_times)


def expected_mean_loss_rate(grad_norm, sigma: float, scaling: TimeScaling):
    """
    Small-mutation prediction for d⟨U⟩/dt per unit scaled time:
    −(βσ²/2)|∇U|²/(αλ) at finite β, −(σ/√2π)|∇U|/(αλ) at β=∞.
    """
    per_step_time = scaling.alpha * scaling.lam
    grad_norm = np.asarray(grad_norm, dtype=np.float64)
    if scaling.beta_infinite:
        rate = -(sigma / SQRT_2PI) * grad_norm / per_step_time
    else:
        rate = -(scaling.beta * sigma ** 2 / 2.0) * grad_norm ** 2 / per_step_time
    return float(rate) if rate.ndim == 0 else rate


def expected_rate_along(
    reference: "TrajectoryRecord", objective: "Objective", dynamics: DynamicsConfig, sigma: float
) -> np.ndarray:
    """Closed-form mean-loss rate evaluated at every snapshot of a reference record."""
    norms = np.array([np.linalg.norm(objective.loss_and_grad(x)[1]) for x in reference.param_snapshots])
    return expected_mean_loss_rate(norms, sigma, dynamics.scaling)
