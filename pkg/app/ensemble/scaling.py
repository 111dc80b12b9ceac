# app/ensemble/scaling.py

from __future__ import annotations

import math

import numpy as np

from app.schemas.dynamics import DynamicsConfig, DynamicsKind, TimeScaling, coerce_beta

SQRT_2PI = math.sqrt(2.0 * math.pi)
_GRID_TOLERANCE = 1e-9


def derive_sigma(scaling: TimeScaling, beta: float | None = None) -> float:
    """
    Mutation scale that makes one evolution step worth λ descent steps:
    σ = λα√(2π) at β=∞, σ = λ√(2α/β) at finite β.
    """
    beta = scaling.beta if beta is None else coerce_beta(beta)
    if not beta > 0:
        raise ValueError(f"beta must be > 0 or infinite, got {beta!r}")
    if math.isinf(beta):
        return scaling.lam * scaling.alpha * SQRT_2PI
    return scaling.lam * math.sqrt(2.0 * scaling.alpha / beta)


def resolve_sigma(dynamics: DynamicsConfig) -> float | np.ndarray:
    """
    σ actually used by a stochastic stepper: the explicit override if one
    was given, else the value derived from (α, λ, β).
    """
    if dynamics.kind.is_gradient_descent:
        raise ValueError("gradient descent has no mutation scale")
    if dynamics.sigma_vec is not None:
        return np.asarray(dynamics.sigma_vec, dtype=np.float64)
    if dynamics.sigma is not None:
        return dynamics.sigma
    return derive_sigma(dynamics.scaling)


def time_per_step(scaling: TimeScaling, kind: DynamicsKind) -> float:
    if kind.is_gradient_descent:
        return scaling.alpha
    if not scaling.lam > 0:
        raise ValueError("lam must be > 0 for evolution/Langevin time to advance")
    return scaling.alpha * scaling.lam


def map_time(step_index: int | np.ndarray, scaling: TimeScaling, kind: DynamicsKind):
    """
    Scaled time of a step: α·step for descent, αλ·step for evolution and
    Langevin dynamics.
    """
    if np.any(np.asarray(step_index) < 0):
        raise ValueError("step_index must be >= 0")
    return time_per_step(scaling, kind) * step_index


def steps_for(duration: float, scaling: TimeScaling, kind: DynamicsKind) -> int:
    """Whole number of steps spanning `duration` units of scaled time."""
    return _whole_multiple(duration, time_per_step(scaling, kind), "duration")


def record_stride(interval: float, scaling: TimeScaling, kind: DynamicsKind) -> int:
    """
    Steps between snapshots so that records land on multiples of
    `interval` in scaled time.
    """
    return _whole_multiple(interval, time_per_step(scaling, kind), "record interval")


def _whole_multiple(span: float, unit: float, what: str) -> int:
    count = round(span / unit)
    if count < 1 or abs(count * unit - span) > _GRID_TOLERANCE * max(span, unit):
        raise ValueError(
            f"{what} {span!r} is not a whole number of steps of scaled length {unit!r}"
        )
    return int(count)
