# app/dynamics/mutation.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

LossFn = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class MutationConfig:
    """
    Gaussian mutation scale (scalar or one σᵢ per parameter) and the
    reciprocal evolutionary temperature β (math.inf for the greedy limit).
    """

    sigma: float | np.ndarray
    beta: float = math.inf

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.ndim > 1:
            raise ValueError(f"sigma must be a scalar or 1-D array, got shape {sigma.shape}")
        if np.any(~(sigma > 0)):
            raise ValueError("sigma must be > 0 (every entry, if per-parameter)")
        object.__setattr__(self, "sigma", float(sigma) if sigma.ndim == 0 else sigma)
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0 or infinite, got {self.beta!r}")

    @property
    def beta_infinite(self) -> bool:
        return math.isinf(self.beta)

    @property
    def isotropic(self) -> bool:
        return np.ndim(self.sigma) == 0


@dataclass
class StepOutcome:
    """
    Result of one Monte Carlo step. On rejection `params` is the very array
    passed in, untouched.
    """

    params: np.ndarray
    accepted: bool
    delta_u: float
    loss: float


def _check_sigma_shape(sigma, params: np.ndarray) -> None:
    if np.ndim(sigma) == 1 and np.shape(sigma) != params.shape:
        raise ValueError(
            f"per-parameter sigma has length {np.size(sigma)}, params have {params.size}"
        )


def propose_mutation(
    params: np.ndarray, config: MutationConfig, rng: np.random.Generator
) -> np.ndarray:
    """
    x + ε with εᵢ ~ N(0, σᵢ²) independently; `params` is not modified.
    """
    _check_sigma_shape(config.sigma, params)
    return params + config.sigma * rng.standard_normal(params.shape)


def propose_mutations(
    params: np.ndarray, config: MutationConfig, rng: np.random.Generator, count: int
) -> np.ndarray:
    """`count` independent proposals from the same `params`, one per row."""
    _check_sigma_shape(config.sigma, params)
    return params + config.sigma * rng.standard_normal((count, params.size))


def acceptance_probability(delta_u, beta: float):
    """
    min(1, e^{−βΔU}); at β=∞ this is 1 for ΔU ≤ 0 and 0 otherwise.

    Works elementwise on arrays of ΔU.
    """
    delta_u = np.asarray(delta_u, dtype=np.float64)
    if math.isinf(beta):
        prob = np.where(delta_u <= 0.0, 1.0, 0.0)
    else:
        with np.errstate(over="ignore"):
            prob = np.where(delta_u <= 0.0, 1.0, np.exp(-beta * np.maximum(delta_u, 0.0)))
    return float(prob) if prob.ndim == 0 else prob


def metropolis_accept(delta_u: float, beta: float, rng: np.random.Generator) -> bool:
    """
    Metropolis decision. ΔU ≤ 0 is always accepted without drawing a
    uniform; at β=∞ uphill moves are always rejected.
    """
    if delta_u <= 0.0:
        return True
    if math.isinf(beta) or not math.isfinite(delta_u):
        return False
    return bool(rng.random() < math.exp(-beta * delta_u))


def metropolis_accept_many(delta_u: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    """
    Metropolis decisions for a batch of independent proposals, one uniform
    per entry. Non-finite ΔU is rejected.
    """
    delta_u = np.asarray(delta_u, dtype=np.float64)
    return rng.random(delta_u.shape) < acceptance_probability(delta_u, beta)


def mc_step(
    params: np.ndarray,
    lossfn: LossFn,
    config: MutationConfig,
    rng: np.random.Generator,
    current_loss: float | None = None,
) -> StepOutcome:
    """
    One neuroevolution step: propose, evaluate the candidate once, accept or
    reject. Pass the previous outcome's `loss` as `current_loss` to avoid
    re-evaluating the current network.
    """
    if current_loss is None:
        current_loss = lossfn(params)
    candidate = propose_mutation(params, config, rng)
    candidate_loss = lossfn(candidate)
    delta_u = candidate_loss - current_loss
    if metropolis_accept(delta_u, config.beta, rng):
        return StepOutcome(params=candidate, accepted=True, delta_u=delta_u, loss=candidate_loss)
    return StepOutcome(params=params, accepted=False, delta_u=delta_u, loss=current_loss)
