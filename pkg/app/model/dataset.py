# app/model/dataset.py

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def sine_target(theta: np.ndarray) -> np.ndarray:
    """f₀(θ) = sin(2πθ)."""
    return np.sin(2.0 * np.pi * theta)


@dataclass(frozen=True)
class Dataset:
    """
    K grid points θ_j = j/K on [0, 1) and their targets f₀(θ_j).
    """

    points: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        if self.points.ndim != 1 or self.points.shape != self.targets.shape:
            raise ValueError(
                f"points and targets must be 1-D of equal length, got "
                f"{self.points.shape} and {self.targets.shape}"
            )
        if self.points.size == 0:
            raise ValueError("dataset must contain at least one point")

    @property
    def k(self) -> int:
        return int(self.points.size)


def make_dataset(k: int, target: Callable[[np.ndarray], np.ndarray] = sine_target) -> Dataset:
    if k < 1:
        raise ValueError(f"K must be a positive integer, got {k}")
    points = np.arange(k, dtype=np.float64) / k
    targets = np.asarray(target(points), dtype=np.float64)
    return Dataset(points=points, targets=targets)
