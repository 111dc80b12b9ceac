# app/ensemble/runner.py

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from app.ensemble.metrics import delta_metric
from app.ensemble.trajectory import (
    ResetPlan,
    TrajectoryRecord,
    TrajectorySpec,
    run_reset_trajectory,
    run_trajectory,
)

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 10


def split_seed(master_seed: int, k: int) -> int:
    """
    64-bit seed of trajectory k, derived from the master seed alone, so the
    first n trajectories of any larger ensemble are the same n trajectories.
    """
    if k < 0:
        raise ValueError(f"trajectory index must be >= 0, got {k}")
    sequence = np.random.SeedSequence(master_seed, spawn_key=(k,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


@dataclass
class EnsembleSummary:
    n: int
    scaled_times: np.ndarray
    mean_params: np.ndarray          # ⟨xᵢ(t)⟩, (n_records, N)
    mean_loss: np.ndarray            # ⟨U(x(t))⟩
    loss_stderr: np.ndarray          # standard error of ⟨U⟩
    loss_of_mean: np.ndarray         # U(⟨x(t)⟩)
    loss_increment_var: np.ndarray   # across-trajectory variance of U(t+δ) − U(t)
    mean_acceptance: float
    loss_increases: int              # summed over every trajectory
    samples: list[TrajectoryRecord] = field(default_factory=list)
    delta: Optional[np.ndarray] = None
    reset_indices: Optional[np.ndarray] = None


# ----------------------------------------------------------------------
# Partial sums: merged associatively, in chunk order
# ----------------------------------------------------------------------

@dataclass
class _PartialSums:
    count: int
    times: np.ndarray
    sum_dev: np.ndarray        # Σ (x_k(t) − shift(t))
    sum_loss: np.ndarray
    sum_loss_sq: np.ndarray
    sum_inc: np.ndarray
    sum_inc_sq: np.ndarray
    accepted: int
    steps: int
    loss_increases: int
    samples: list[TrajectoryRecord]

    @classmethod
    def of(cls, record: TrajectoryRecord, shift: np.ndarray | float, keep: bool) -> "_PartialSums":
        increments = np.diff(record.loss_series)
        return cls(
            count=1,
            times=record.scaled_times,
            sum_dev=record.param_snapshots - shift,
            sum_loss=record.loss_series.copy(),
            sum_loss_sq=record.loss_series ** 2,
            sum_inc=increments,
            sum_inc_sq=increments ** 2,
            accepted=record.acceptance_count,
            steps=record.steps,
            loss_increases=int(np.count_nonzero(increments > 0.0)),
            samples=[record] if keep else [],
        )

    def merge(self, other: "_PartialSums") -> "_PartialSums":
        return _PartialSums(
            count=self.count + other.count,
            times=self.times,
            sum_dev=self.sum_dev + other.sum_dev,
            sum_loss=self.sum_loss + other.sum_loss,
            sum_loss_sq=self.sum_loss_sq + other.sum_loss_sq,
            sum_inc=self.sum_inc + other.sum_inc,
            sum_inc_sq=self.sum_inc_sq + other.sum_inc_sq,
            accepted=self.accepted + other.accepted,
            steps=self.steps + other.steps,
            loss_increases=self.loss_increases + other.loss_increases,
            samples=self.samples + other.samples,
        )


def _pairwise_merge(parts: list[_PartialSums]) -> _PartialSums:
    """Ordered pairwise tree reduction; the tree depends only on len(parts)."""
    while len(parts) > 1:
        merged = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


@dataclass(frozen=True)
class _ChunkJob:
    spec: TrajectorySpec
    indices: tuple[int, ...]
    master_seed: int
    n_samples: int
    reset: Optional[ResetPlan] = None
    shift: Optional[np.ndarray] = None


def _run_chunk(job: _ChunkJob) -> _PartialSums:
    parts = []
    shift = 0.0 if job.shift is None else job.shift
    for k in job.indices:
        spec = replace(job.spec, seed=split_seed(job.master_seed, k), trajectory_index=k)
        if job.reset is None:
            record = run_trajectory(spec)
        else:
            record = run_reset_trajectory(spec, job.reset)
        parts.append(_PartialSums.of(record, shift, keep=k < job.n_samples))
    return _pairwise_merge(parts)


# ----------------------------------------------------------------------
# Public entry points
# ----------------------------------------------------------------------

def _chunk_jobs(
    spec: TrajectorySpec,
    boundaries: list[int],
    master_seed: int,
    chunk_size: int,
    n_samples: int,
    reset: Optional[ResetPlan],
    shift: Optional[np.ndarray],
) -> list[_ChunkJob]:
    """Chunks of at most `chunk_size` indices that never straddle a boundary."""
    jobs = []
    start = 0
    for stop in boundaries:
        for lo in range(start, stop, chunk_size):
            indices = tuple(range(lo, min(lo + chunk_size, stop)))
            jobs.append(_ChunkJob(spec, indices, master_seed, n_samples, reset, shift))
        start = stop
    return jobs


def _run_jobs(jobs: list[_ChunkJob], workers: int) -> list[_PartialSums]:
    """Chunk partial sums in job order, serially or on a process pool."""
    if workers <= 1 or len(jobs) == 1:
        partials = []
        for i, job in enumerate(jobs, start=1):
            partials.append(_run_chunk(job))
            logger.debug("Chunk %d/%d done", i, len(jobs))
        return partials
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, job) for job in jobs]
        for done, _ in enumerate(as_completed(futures), start=1):
            if done % max(1, len(jobs) // 10) == 0:
                logger.info("Ensemble progress: %d/%d chunks", done, len(jobs))
        return [f.result() for f in futures]


def _finish(
    total: _PartialSums,
    spec: TrajectorySpec,
    shift: Optional[np.ndarray],
    reference: Optional[TrajectoryRecord],
) -> EnsembleSummary:
    summary = _summarize(total, spec, shift)
    if reference is not None:
        summary.delta = delta_metric(reference, summary)
    logger.info(
        "Ensemble done: n=%d, final <U>=%.6e, mean acceptance=%.4f",
        summary.n, summary.mean_loss[-1], summary.mean_acceptance,
    )
    return summary


def _check_sizes(n: int, chunk_size: int) -> None:
    if n < 1:
        raise ValueError(f"ensemble size n must be >= 1, got {n}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")


def run_ensemble(
    spec: TrajectorySpec,
    n: int,
    master_seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    n_samples: int = 0,
    reference: Optional[TrajectoryRecord] = None,
    reset: Optional[ResetPlan] = None,
    shift: Optional[np.ndarray] = None,
) -> EnsembleSummary:
    """
    Run n independent trajectories from the shared spec.init and reduce them
    to per-record ensemble statistics.

    - Trajectory k is seeded with split_seed(master_seed, k).
    - Trajectories are grouped into chunks of `chunk_size`; chunk results are
      merged in index order, so the summary is identical for any `workers`.
    - The first `n_samples` trajectory records are kept in `samples`.
    - With a `reference` record, Δ(t) against it is filled in.
    - `reset`/`shift` are used by reset_protocol.
    """
    _check_sizes(n, chunk_size)
    jobs = _chunk_jobs(spec, [n], master_seed, chunk_size, n_samples, reset, shift)
    logger.info(
        "Running ensemble: n=%d, dynamics=%s, steps=%d, chunks=%d, workers=%d",
        n, spec.dynamics.kind.value, spec.steps, len(jobs), workers,
    )
    partials = _run_jobs(jobs, workers)
    return _finish(_pairwise_merge(partials), spec, shift, reference)


def summarize_records(
    records: list[TrajectoryRecord],
    spec: TrajectorySpec,
    reference: Optional[TrajectoryRecord] = None,
) -> EnsembleSummary:
    """
    Ensemble statistics of already-integrated trajectories, merged in the
    order given. Every record in `samples` is kept.
    """
    if not records:
        raise ValueError("summarize_records needs at least one record")
    parts = [_PartialSums.of(record, 0.0, keep=True) for record in records]
    return _finish(_pairwise_merge(parts), spec, None, reference)


def _summarize(total: _PartialSums, spec: TrajectorySpec, shift: Optional[np.ndarray]) -> EnsembleSummary:
    n = total.count
    mean_params = total.sum_dev / n
    if shift is not None:
        mean_params = shift + mean_params
    mean_loss = total.sum_loss / n
    if n > 1:
        loss_var = np.maximum(total.sum_loss_sq - n * mean_loss ** 2, 0.0) / (n - 1)
        inc_mean = total.sum_inc / n
        inc_var = np.maximum(total.sum_inc_sq - n * inc_mean ** 2, 0.0) / (n - 1)
    else:
        loss_var = np.zeros_like(mean_loss)
        inc_var = np.zeros_like(total.sum_inc)
    objective = spec.resolve_objective()
    loss_of_mean = np.array([objective(x) for x in mean_params])
    return EnsembleSummary(
        n=n,
        scaled_times=total.times,
        mean_params=mean_params,
        mean_loss=mean_loss,
        loss_stderr=np.sqrt(loss_var / n),
        loss_of_mean=loss_of_mean,
        loss_increment_var=inc_var,
        mean_acceptance=total.accepted / total.steps if total.steps else 0.0,
        loss_increases=total.loss_increases,
        samples=total.samples,
    )


def ensemble_size_sweep(
    spec: TrajectorySpec,
    sizes: list[int],
    master_seed: int,
    reference: TrajectoryRecord,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    n_samples: int = 0,
) -> dict[int, EnsembleSummary]:
    """
    Ensemble summaries (Δ included) for several ensemble sizes, reduced from
    nested prefixes of one run of max(sizes) trajectories. Chunks end on
    every size, so each prefix is a whole number of chunks.
    """
    boundaries = sorted(set(sizes))
    if not boundaries:
        raise ValueError("sizes must not be empty")
    _check_sizes(boundaries[0], chunk_size)
    jobs = _chunk_jobs(spec, boundaries, master_seed, chunk_size, n_samples, None, None)
    logger.info(
        "Running ensemble sweep: sizes=%s, dynamics=%s, steps=%d, chunks=%d, workers=%d",
        boundaries, spec.dynamics.kind.value, spec.steps, len(jobs), workers,
    )
    partials = _run_jobs(jobs, workers)
    ends = np.cumsum([len(job.indices) for job in jobs])
    return {
        n: _finish(_pairwise_merge(partials[: int(np.searchsorted(ends, n)) + 1]), spec, None, reference)
        for n in boundaries
    }
