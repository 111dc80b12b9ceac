# app/dynamics/descent.py

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_GRAD_NORM_FLOOR = 1e-30


@dataclass(frozen=True)
class GDConfig:
    alpha: float
    clipped: bool = False
    grad_norm_floor: float = DEFAULT_GRAD_NORM_FLOOR

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"learning rate alpha must be > 0, got {self.alpha!r}")
        if self.grad_norm_floor < 0:
            raise ValueError("grad_norm_floor must be >= 0")


def gd_step_plain(params: np.ndarray, grad: np.ndarray, cfg: GDConfig) -> np.ndarray:
    """x ← x − α∇U."""
    return params - cfg.alpha * grad


def gd_step_clipped(params: np.ndarray, grad: np.ndarray, cfg: GDConfig) -> np.ndarray:
    """
    x ← x − α∇U/|∇U|: a step of length exactly α, or no step at all when
    |∇U| is at or below the floor.
    """
    norm = float(np.linalg.norm(grad))
    if norm <= cfg.grad_norm_floor:
        return params.copy()
    return params - (cfg.alpha / norm) * grad


def gd_step(params: np.ndarray, grad: np.ndarray, cfg: GDConfig) -> np.ndarray:
    if cfg.clipped:
        return gd_step_clipped(params, grad, cfg)
    return gd_step_plain(params, grad, cfg)
