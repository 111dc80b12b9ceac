# app/analysis/toy_losses.py

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass(frozen=True)
class QuadraticLoss:
    """U(x) = ½κ Σ xᵢ²; its Boltzmann distribution is N(0, 1/(βκ)) per coordinate."""

    kappa: float
    dimension: int

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise ValueError(f"stiffness kappa must be > 0, got {self.kappa!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")

    kind = "quadratic"

    def __call__(self, x: np.ndarray) -> float:
        return 0.5 * self.kappa * float(x @ x)

    def batch(self, xs: np.ndarray) -> np.ndarray:
        return 0.5 * self.kappa * np.einsum("ij,ij->i", xs, xs)

    def loss_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self(x), self.kappa * x

    def boltzmann_variance(self, beta: float) -> float:
        return 1.0 / (beta * self.kappa)


@dataclass(frozen=True)
class LinearLoss:
    """U(x) = g·x with a constant gradient g."""

    gradient: tuple[float, ...]

    def __post_init__(self) -> None:
        g = np.asarray(self.gradient, dtype=np.float64)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("gradient must be a non-empty vector")
        if not np.all(np.isfinite(g)) or not np.any(g != 0.0):
            raise ValueError("gradient must be finite and nonzero")

    kind = "linear"

    @property
    def g(self) -> np.ndarray:
        return np.asarray(self.gradient, dtype=np.float64)

    @property
    def dimension(self) -> int:
        return len(self.gradient)

    def __call__(self, x: np.ndarray) -> float:
        return float(x @ self.g)

    def batch(self, xs: np.ndarray) -> np.ndarray:
        return xs @ self.g

    def loss_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self(x), self.g


ToyLoss = Union[QuadraticLoss, LinearLoss]


def evaluate_rows(lossfn, xs: np.ndarray) -> np.ndarray:
    """U at every row of xs, vectorized when the loss supports it."""
    batch = getattr(lossfn, "batch", None)
    if batch is not None:
        return np.asarray(batch(xs), dtype=np.float64)
    return np.array([lossfn(x) for x in xs])
