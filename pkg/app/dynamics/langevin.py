# app/dynamics/langevin.py

from __future__ import annotations

import logging
import math

import numpy as np

from app.dynamics.descent import DEFAULT_GRAD_NORM_FLOOR

logger = logging.getLogger(__name__)

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Every stepper integrates with Δt = 1 Monte Carlo step.


def langevin_step_finite(
    params: np.ndarray,
    grad: np.ndarray,
    beta: float,
    sigma: float | np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Finite-β limit of neuroevolution:
    xᵢ ← xᵢ − (βσᵢ²/2) gᵢ + ξᵢ,  ξᵢ ~ N(0, σᵢ²).
    """
    if math.isinf(beta):
        raise ValueError("langevin_step_finite needs a finite beta")
    sigma = np.asarray(sigma, dtype=np.float64)
    drift = -(beta * sigma * sigma / 2.0) * grad
    return params + drift + sigma * rng.standard_normal(params.shape)


def langevin_step_infinite(
    params: np.ndarray,
    grad: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
    grad_norm_floor: float = DEFAULT_GRAD_NORM_FLOOR,
) -> np.ndarray:
    """
    β=∞ limit: xᵢ ← xᵢ − (σ/√2π) gᵢ/|∇U| + ηᵢ,  ηᵢ ~ N(0, σ²/2).

    At a gradient-degenerate point (|∇U| ≤ floor) the drift is zero and
    only the noise is applied.
    """
    noise = (sigma / math.sqrt(2.0)) * rng.standard_normal(params.shape)
    norm = float(np.linalg.norm(grad))
    if norm <= grad_norm_floor:
        logger.debug("Gradient-degenerate point (|grad|=%.3e); drift frozen", norm)
        return params + noise
    return params - (sigma * INV_SQRT_2PI / norm) * grad + noise


def langevin_step_noniso(
    params: np.ndarray,
    grad: np.ndarray,
    sigma_vec: np.ndarray,
    rng: np.random.Generator,
    grad_norm_floor: float = DEFAULT_GRAD_NORM_FLOOR,
) -> np.ndarray:
    """
    β=∞ limit with per-parameter mutation scales σᵢ:
    xᵢ ← xᵢ − (σᵢ/√2π)(σᵢgᵢ)/|∇̃U| + ηᵢ,  ηᵢ ~ N(0, σᵢ²/2),
    where ∇̃ᵢU = σᵢgᵢ.
    """
    sigma_vec = np.asarray(sigma_vec, dtype=np.float64)
    if np.any(~(sigma_vec > 0)):
        raise ValueError("every sigma_vec entry must be > 0")
    noise = (sigma_vec / math.sqrt(2.0)) * rng.standard_normal(params.shape)
    tilde_grad = sigma_vec * grad
    norm = float(np.linalg.norm(tilde_grad))
    if norm <= grad_norm_floor:
        logger.debug("Gradient-degenerate point (|tilde grad|=%.3e); drift frozen", norm)
        return params + noise
    return params - (sigma_vec * INV_SQRT_2PI / norm) * tilde_grad + noise
