# app/analysis/acceptance.py

from __future__ import annotations

import logging
import math

import numpy as np

from app.analysis.toy_losses import evaluate_rows
from app.dynamics.mutation import MutationConfig, metropolis_accept_many, propose_mutations

logger = logging.getLogger(__name__)

_BATCH = 20_000


def acceptance_rate_limit(
    loss,
    point: np.ndarray,
    sigma_ladder,
    n_probes: int = 100_000,
    rng: np.random.Generator | None = None,
    beta: float = math.inf,
) -> np.ndarray:
    """
    Fraction of proposals accepted at a fixed point for each σ in the ladder.
    At β=∞ and a point with nonzero gradient this tends to 1/2 as σ→0; at
    a strict minimum it tends to 0.
    """
    point = np.asarray(point, dtype=np.float64)
    if hasattr(loss, "loss_and_grad") and not np.any(loss.loss_and_grad(point)[1]):
        logger.warning("Zero gradient at the probe point; the 1/2 limit does not apply")
    rng = rng if rng is not None else np.random.default_rng()
    u0 = loss(point)
    rates = []
    for sigma in sigma_ladder:
        config = MutationConfig(sigma, beta)
        accepted = 0
        remaining = n_probes
        while remaining:
            b = min(_BATCH, remaining)
            candidates = propose_mutations(point, config, rng, b)
            accept = metropolis_accept_many(evaluate_rows(loss, candidates) - u0, beta, rng)
            accepted += int(np.count_nonzero(accept))
            remaining -= b
        rates.append(accepted / n_probes)
    return np.array(rates)


def binomial_stderr(rate: float | np.ndarray, n: int):
    return np.sqrt(np.asarray(rate) * (1.0 - np.asarray(rate)) / n)
