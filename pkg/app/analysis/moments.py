# app/analysis/moments.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from app.analysis.toy_losses import evaluate_rows
from app.dynamics.mutation import MutationConfig, metropolis_accept_many, propose_mutations

logger = logging.getLogger(__name__)

MIN_PROBES = 1_000
_BATCH = 20_000


@dataclass
class MomentReport:
    """
    Empirical jump moments of the Monte Carlo kernel at one point:
    drift E[Δxᵢ] and second moment E[ΔxᵢΔxⱼ], with standard errors.
    """

    sample_count: int
    coordinates: np.ndarray
    drift: np.ndarray
    drift_stderr: np.ndarray
    second_moment: np.ndarray
    second_moment_stderr: np.ndarray
    acceptance_rate: float

    def drift_z(self, expected: np.ndarray) -> np.ndarray:
        return (self.drift - expected) / self.drift_stderr

    def second_moment_z(self, expected: np.ndarray) -> np.ndarray:
        return (self.second_moment - expected) / self.second_moment_stderr

    def matches(self, expected_drift: np.ndarray, expected_second: np.ndarray, n_se: float = 3.0) -> bool:
        return bool(
            np.all(np.abs(self.drift_z(expected_drift)) <= n_se)
            and np.all(np.abs(self.second_moment_z(expected_second)) <= n_se)
        )


def estimate_drift_diffusion(
    loss,
    point: np.ndarray,
    config: MutationConfig,
    n_probes: int,
    rng: np.random.Generator,
    coordinates: np.ndarray | None = None,
) -> MomentReport:
    """
    Apply n_probes independent single Monte Carlo steps at a fixed point.
    Rejected probes contribute zero displacement.

    `coordinates` restricts the reported moments to a subset, which keeps the
    second-moment matrix small for large networks.
    """
    if n_probes < MIN_PROBES:
        raise ValueError(f"n_probes must be >= {MIN_PROBES}, got {n_probes}")
    point = np.asarray(point, dtype=np.float64)
    coords = np.arange(point.size) if coordinates is None else np.asarray(coordinates)
    u0 = loss(point)

    d = coords.size
    s1 = np.zeros(d)
    s2 = np.zeros(d)
    sdd = np.zeros((d, d))
    sdd2 = np.zeros((d, d))
    accepted = 0
    remaining = n_probes
    while remaining:
        b = min(_BATCH, remaining)
        candidates = propose_mutations(point, config, rng, b)
        accept = metropolis_accept_many(evaluate_rows(loss, candidates) - u0, config.beta, rng)
        disp = (candidates[:, coords] - point[coords]) * accept[:, None]
        s1 += disp.sum(axis=0)
        s2 += (disp * disp).sum(axis=0)
        sdd += disp.T @ disp
        sq = disp * disp
        sdd2 += sq.T @ sq
        accepted += int(accept.sum())
        remaining -= b

    n = n_probes
    drift = s1 / n
    second = sdd / n
    drift_var = np.maximum(s2 - n * drift ** 2, 0.0) / (n - 1)
    second_var = np.maximum(sdd2 - n * second ** 2, 0.0) / (n - 1)
    logger.debug("Moment estimate: %d probes, acceptance %.4f", n, accepted / n)
    return MomentReport(
        sample_count=n,
        coordinates=coords,
        drift=drift,
        drift_stderr=np.sqrt(drift_var / n),
        second_moment=second,
        second_moment_stderr=np.sqrt(second_var / n),
        acceptance_rate=accepted / n,
    )


def drift_diffusion_closed_form(
    grad: np.ndarray, sigma: float | np.ndarray, beta: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Small-mutation jump moments (A, B) of Metropolis neuroevolution:

    - finite β: A = −(βσᵢ²/2) gᵢ,                  B = σᵢ² δᵢⱼ
    - β = ∞:    A = −(σᵢ/√2π) σᵢgᵢ / |σg|,          B = (σᵢ²/2) δᵢⱼ
    """
    grad = np.asarray(grad, dtype=np.float64)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), grad.shape)
    if math.isinf(beta):
        tilde = sigma * grad
        drift = -(sigma / math.sqrt(2.0 * math.pi)) * tilde / np.linalg.norm(tilde)
        second = np.diag(sigma ** 2 / 2.0)
    else:
        drift = -(beta * sigma ** 2 / 2.0) * grad
        second = np.diag(sigma ** 2)
    return drift, second
