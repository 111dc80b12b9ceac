# app/analysis/stationarity.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from app.analysis.toy_losses import QuadraticLoss
from app.dynamics.mutation import MutationConfig, mc_step

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 1_000_000
DEFAULT_BURN_IN = 100_000


@dataclass
class StationarityReport:
    steps: int
    burn_in: int
    sigma: float
    acceptance_rate: float
    mean: np.ndarray
    mean_stderr: np.ndarray
    variance: np.ndarray
    boltzmann_variance: float
    energy_chi2: float
    energy_pvalue: float
    energy_edges: np.ndarray
    energy_counts: np.ndarray

    @property
    def variance_rel_error(self) -> np.ndarray:
        return np.abs(self.variance - self.boltzmann_variance) / self.boltzmann_variance

    @property
    def mean_z(self) -> np.ndarray:
        return self.mean / self.mean_stderr


def suggested_sigma(toy: QuadraticLoss, beta: float) -> float:
    """Random-walk proposal scale 2.4/√(βκd)."""
    return 2.4 / math.sqrt(beta * toy.kappa * toy.dimension)


def batch_means_se(samples: np.ndarray, n_batches: int = 100) -> np.ndarray:
    """
    Standard error of the mean of a correlated chain, per column, from the
    spread of `n_batches` contiguous batch means.
    """
    usable = (len(samples) // n_batches) * n_batches
    if usable == 0:
        raise ValueError("chain shorter than the number of batches")
    means = samples[:usable].reshape(n_batches, -1, samples.shape[1]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def stationary_check(
    toy: QuadraticLoss,
    beta: float,
    steps: int = DEFAULT_STEPS,
    burn_in: int = DEFAULT_BURN_IN,
    rng: np.random.Generator | None = None,
    sigma: float | None = None,
    thin: int = 50,
    energy_bins: int = 10,
) -> StationarityReport:
    """
    Run one long finite-β Metropolis chain on a quadratic loss and compare
    its moments with the Boltzmann distribution ∝ e^{−βU}.

    The energy check bins βU of a thinned chain into equiprobable bins of
    its Gamma(d/2, 1) law and applies a chi-square test.
    """
    if math.isinf(beta) or not beta > 0:
        raise ValueError("stationary_check needs a finite beta > 0 (the beta=inf chain is not ergodic)")
    if steps < 1 or burn_in < 0:
        raise ValueError("steps must be >= 1 and burn_in >= 0")
    rng = rng if rng is not None else np.random.default_rng()
    sigma = suggested_sigma(toy, beta) if sigma is None else sigma
    d = toy.dimension
    config = MutationConfig(sigma, beta)

    x = np.zeros(d)
    u = toy(x)
    kept = np.empty((steps, d))
    accepted = 0
    total = burn_in + steps
    for step in range(total):
        outcome = mc_step(x, toy, config, rng, current_loss=u)
        x, u = outcome.params, outcome.loss
        accepted += outcome.accepted
        if step >= burn_in:
            kept[step - burn_in] = x

    mean = kept.mean(axis=0)
    variance = kept.var(axis=0, ddof=1)
    energies = beta * toy.batch(kept[::thin])
    edges = stats.gamma.ppf(np.linspace(0.0, 1.0, energy_bins + 1), a=d / 2.0)
    # last edge is +inf; bin by the interior edges
    counts = np.bincount(np.searchsorted(edges[1:-1], energies, side="right"), minlength=energy_bins)
    chi2, pvalue = stats.chisquare(counts)

    report = StationarityReport(
        steps=steps,
        burn_in=burn_in,
        sigma=sigma,
        acceptance_rate=accepted / total,
        mean=mean,
        mean_stderr=batch_means_se(kept),
        variance=variance,
        boltzmann_variance=toy.boltzmann_variance(beta),
        energy_chi2=float(chi2),
        energy_pvalue=float(pvalue),
        energy_edges=edges,
        energy_counts=counts,
    )
    logger.info(
        "Stationarity: variance=%s (Boltzmann %.4g), acceptance=%.3f, energy p=%.3g",
        np.array2string(variance, precision=5), report.boltzmann_variance,
        report.acceptance_rate, report.energy_pvalue,
    )
    return report
