# app/ensemble/trajectory.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from app.dynamics.descent import GDConfig, gd_step
from app.dynamics.langevin import (
    langevin_step_finite,
    langevin_step_infinite,
    langevin_step_noniso,
)
from app.dynamics.mutation import MutationConfig, mc_step
from app.ensemble.scaling import map_time, resolve_sigma
from app.model.dataset import Dataset
from app.model.networks import NetworkObjective
from app.schemas.architecture import NetworkArchitecture
from app.schemas.dynamics import DynamicsConfig, DynamicsKind

logger = logging.getLogger(__name__)


class Objective(Protocol):
    """Anything with U(x) and an exact gradient: networks and toy losses."""

    def __call__(self, params: np.ndarray) -> float: ...

    def loss_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]: ...


class DivergenceError(RuntimeError):
    """Raised when a trajectory produces a non-finite loss."""

    def __init__(
        self,
        message: str,
        trajectory: Optional[int] = None,
        step: Optional[int] = None,
        scaled_time: Optional[float] = None,
    ) -> None:
        # All fields go into args so the error survives pickling across workers.
        super().__init__(message, trajectory, step, scaled_time)
        self.message = message
        self.trajectory = trajectory
        self.step = step
        self.scaled_time = scaled_time

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class TrajectorySpec:
    """
    Everything one trajectory needs. The loss is the network loss of
    (arch, dataset) unless a toy `objective` is supplied instead.
    """

    dynamics: DynamicsConfig
    init: np.ndarray
    steps: int
    record_stride: int
    seed: int = 0
    arch: Optional[NetworkArchitecture] = None
    dataset: Optional[Dataset] = None
    objective: Optional[Objective] = None
    trajectory_index: int = 0

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")
        if self.objective is None and (self.arch is None or self.dataset is None):
            raise ValueError("give either arch and dataset, or an objective")
        init = np.asarray(self.init, dtype=np.float64)
        if init.ndim != 1 or not np.all(np.isfinite(init)):
            raise ValueError("init must be a 1-D vector of finite values")
        if self.arch is not None and self.objective is None and init.size != self.arch.n_params:
            raise ValueError(
                f"init has {init.size} entries; {self.arch.describe()} needs {self.arch.n_params}"
            )
        object.__setattr__(self, "init", init)

    def resolve_objective(self) -> Objective:
        if self.objective is not None:
            return self.objective
        return NetworkObjective(self.arch, self.dataset)


@dataclass
class TrajectoryRecord:
    scaled_times: np.ndarray
    param_snapshots: np.ndarray   # (n_records, N)
    loss_series: np.ndarray
    acceptance_count: int = 0
    steps: int = 0
    trajectory_index: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.acceptance_count / self.steps if self.steps else 0.0


@dataclass
class _Segment:
    snapshots: np.ndarray
    losses: np.ndarray
    accepted: int = 0
    first_step: int = 0
    step_offsets: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def _diverged(kind: DynamicsKind, trajectory: int, step: int, dynamics: DynamicsConfig) -> DivergenceError:
    t = float(map_time(step, dynamics.scaling, kind)) if dynamics.lam > 0 or kind.is_gradient_descent else None
    return DivergenceError(
        f"non-finite loss in trajectory {trajectory} at step {step} (t={t}, dynamics={kind.value})",
        trajectory=trajectory,
        step=step,
        scaled_time=t,
    )


def integrate(
    objective: Objective,
    dynamics: DynamicsConfig,
    x0: np.ndarray,
    steps: int,
    stride: int,
    rng: np.random.Generator,
    *,
    trajectory: int = 0,
    first_step: int = 0,
) -> _Segment:
    """
    Run `steps` steps of the configured stepper from x0, recording the state
    and loss at step 0 and every `stride` steps.

    `first_step` only shifts the step numbers reported in diagnostics.
    """
    kind = dynamics.kind
    n_records = steps // stride + 1
    snapshots = np.empty((n_records, x0.size))
    losses = np.empty(n_records)
    x = np.array(x0, dtype=np.float64, copy=True)
    accepted = 0

    if kind is DynamicsKind.MC:
        config = MutationConfig(resolve_sigma(dynamics), dynamics.beta)
        u = objective(x)
    else:
        u, g = objective.loss_and_grad(x)
    if not math.isfinite(u):
        raise _diverged(kind, trajectory, first_step, dynamics)
    snapshots[0] = x
    losses[0] = u

    if kind is DynamicsKind.MC:
        for step in range(1, steps + 1):
            outcome = mc_step(x, objective, config, rng, current_loss=u)
            if not math.isfinite(outcome.delta_u):
                raise _diverged(kind, trajectory, first_step + step, dynamics)
            x, u = outcome.params, outcome.loss
            accepted += outcome.accepted
            if step % stride == 0:
                snapshots[step // stride] = x
                losses[step // stride] = u
    else:
        advance = _deterministic_or_langevin(dynamics)
        for step in range(1, steps + 1):
            x = advance(x, g, rng)
            u, g = objective.loss_and_grad(x)
            if not math.isfinite(u):
                raise _diverged(kind, trajectory, first_step + step, dynamics)
            if step % stride == 0:
                snapshots[step // stride] = x
                losses[step // stride] = u

    offsets = first_step + stride * np.arange(n_records, dtype=np.int64)
    return _Segment(snapshots, losses, accepted, first_step, offsets)


def _deterministic_or_langevin(dynamics: DynamicsConfig):
    kind = dynamics.kind
    floor = dynamics.grad_norm_floor
    if kind.is_gradient_descent:
        cfg = GDConfig(dynamics.alpha, clipped=kind is DynamicsKind.GD_CLIPPED, grad_norm_floor=floor)
        return lambda x, g, rng: gd_step(x, g, cfg)

    sigma = resolve_sigma(dynamics)
    if not np.all(np.asarray(sigma) > 0):
        raise ValueError("Langevin dynamics needs sigma > 0")
    if not dynamics.beta_infinite:
        beta = dynamics.beta
        return lambda x, g, rng: langevin_step_finite(x, g, beta, sigma, rng)
    if np.ndim(sigma) == 1:
        return lambda x, g, rng: langevin_step_noniso(x, g, sigma, rng, floor)
    return lambda x, g, rng: langevin_step_infinite(x, g, sigma, rng, floor)


def run_trajectory(spec: TrajectorySpec) -> TrajectoryRecord:
    """
    Iterate the configured stepper from spec.init; deterministic given spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    segment = integrate(
        spec.resolve_objective(),
        spec.dynamics,
        spec.init,
        spec.steps,
        spec.record_stride,
        rng,
        trajectory=spec.trajectory_index,
    )
    return TrajectoryRecord(
        scaled_times=np.asarray(map_time(segment.step_offsets, spec.dynamics.scaling, spec.dynamics.kind), dtype=np.float64),
        param_snapshots=segment.snapshots,
        loss_series=segment.losses,
        acceptance_count=segment.accepted,
        steps=spec.steps,
        trajectory_index=spec.trajectory_index,
    )


@dataclass(frozen=True)
class ResetPlan:
    """
    Reference states to restart from at the start of every window, and the
    number of steps in each window.
    """

    anchors: np.ndarray   # (n_windows, N)
    window_steps: int

    def __post_init__(self) -> None:
        if self.window_steps < 1:
            raise ValueError("window_steps must be >= 1")
        if np.ndim(self.anchors) != 2 or len(self.anchors) < 1:
            raise ValueError("anchors must be a non-empty (n_windows, N) array")


def run_reset_trajectory(spec: TrajectorySpec, plan: ResetPlan) -> TrajectoryRecord:
    """
    Evolve freely within each window after overwriting the state with that
    window's anchor. The record at a window boundary is the post-reset state;
    only the final window keeps its closing snapshot.
    """
    rng = np.random.default_rng(spec.seed)
    objective = spec.resolve_objective()
    n_windows = len(plan.anchors)
    snapshots, losses, offsets = [], [], []
    accepted = 0
    for window, anchor in enumerate(plan.anchors):
        segment = integrate(
            objective,
            spec.dynamics,
            anchor,
            plan.window_steps,
            spec.record_stride,
            rng,
            trajectory=spec.trajectory_index,
            first_step=window * plan.window_steps,
        )
        keep = len(segment.losses) if window == n_windows - 1 else len(segment.losses) - 1
        snapshots.append(segment.snapshots[:keep])
        losses.append(segment.losses[:keep])
        offsets.append(segment.step_offsets[:keep])
        accepted += segment.accepted
    step_offsets = np.concatenate(offsets)
    return TrajectoryRecord(
        scaled_times=np.asarray(map_time(step_offsets, spec.dynamics.scaling, spec.dynamics.kind), dtype=np.float64),
        param_snapshots=np.concatenate(snapshots),
        loss_series=np.concatenate(losses),
        acceptance_count=accepted,
        steps=n_windows * plan.window_steps,
        trajectory_index=spec.trajectory_index,
    )
