# app/model/gradients.py

from __future__ import annotations

from typing import Callable

import numpy as np

from app.model.dataset import Dataset
from app.model.networks import NetworkObjective
from app.schemas.architecture import NetworkArchitecture

FD_STEP = 1e-6
RELATIVE_ERROR_FLOOR = 1e-4


def central_difference(
    fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    h: float = FD_STEP,
    coordinates: np.ndarray | None = None,
) -> np.ndarray:
    """
    [U(x + hᵢeᵢ) − U(x − hᵢeᵢ)] / (2hᵢ) with hᵢ = h·max(1, |xᵢ|).

    With `coordinates` only those entries are computed; the others are NaN.
    """
    if h <= 0:
        raise ValueError(f"finite-difference step must be > 0, got {h}")
    x = np.array(params, dtype=np.float64, copy=True)
    indices = np.arange(x.size) if coordinates is None else np.asarray(coordinates)
    grad = np.full(x.size, np.nan) if coordinates is not None else np.empty(x.size)
    for i in indices:
        original = x[i]
        step = h * max(1.0, abs(original))
        x[i] = original + step
        upper = fn(x)
        x[i] = original - step
        lower = fn(x)
        x[i] = original
        grad[i] = (upper - lower) / (2.0 * step)
    return grad


def fd_grad(
    params: np.ndarray,
    arch: NetworkArchitecture,
    data: Dataset,
    h: float = FD_STEP,
    coordinates: np.ndarray | None = None,
) -> np.ndarray:
    return central_difference(NetworkObjective(arch, data), params, h=h, coordinates=coordinates)


def relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = RELATIVE_ERROR_FLOOR
) -> np.ndarray:
    """
    |a − b| / max(|a|, |b|, floor), elementwise.

    The floor keeps coordinates whose gradient is ~0 from reporting
    round-off noise as a large relative error.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom
