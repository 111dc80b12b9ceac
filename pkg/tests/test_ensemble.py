from __future__ import annotations

import math
import pickle

import numpy as np
import pytest

from app.analysis.toy_losses import LinearLoss, QuadraticLoss
from app.dynamics.langevin import INV_SQRT_2PI
from app.dynamics.mutation import MutationConfig, propose_mutations
from app.ensemble import runner
from app.ensemble.metrics import (
    GridMismatchError,
    delta_metric,
    expected_mean_loss_rate,
    expected_rate_along,
    mean_loss_rate,
    mean_loss_rate_stderr,
)
from app.ensemble.reset import reset_protocol
from app.ensemble.runner import ensemble_size_sweep, run_ensemble, split_seed, summarize_records
from app.ensemble.scaling import derive_sigma, map_time, record_stride, resolve_sigma, steps_for, time_per_step
from app.ensemble.trajectory import DivergenceError, TrajectorySpec, run_trajectory
from app.model.networks import init_params
from app.schemas.dynamics import DynamicsConfig, DynamicsKind, TimeScaling

START = np.array([1.0, -0.5, 0.25])


def _spec(kind: str = "mc", *, objective=None, steps: int = 20, stride: int = 2, alpha: float = 1e-2,
          lam: float = 1.0, beta: float = math.inf, seed: int = 0, init=START) -> TrajectorySpec:
    dynamics = DynamicsConfig(kind=kind, alpha=alpha, lam=lam, beta=beta)
    return TrajectorySpec(
        dynamics=dynamics,
        init=init,
        steps=steps,
        record_stride=stride,
        seed=seed,
        objective=objective if objective is not None else QuadraticLoss(kappa=1.0, dimension=3),
    )


class _CliffLoss:
    """U(x) = x₀ for x₀ < 1, NaN beyond."""

    def __call__(self, x: np.ndarray) -> float:
        return float(x[0]) if x[0] < 1.0 else math.nan

    def loss_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self(x), np.array([-1.0])


# ----------------------------------------------------------------------
# Seeds and time scaling
# ----------------------------------------------------------------------

def test_split_seed_is_deterministic_and_distinct() -> None:
    seeds = [split_seed(42, k) for k in range(50)]
    assert seeds == [split_seed(42, k) for k in range(50)]
    assert len(set(seeds)) == 50
    assert split_seed(42, 0) != split_seed(43, 0)
    with pytest.raises(ValueError, match=">= 0"):
        split_seed(42, -1)


def test_split_seed_streams_are_uncorrelated() -> None:
    x = np.zeros(30)
    config = MutationConfig(1.0)
    for k in (0, 1, 7):
        a = propose_mutations(x, config, np.random.default_rng(split_seed(2021, k)), 10_000).ravel()
        b = propose_mutations(x, config, np.random.default_rng(split_seed(2021, k + 1)), 10_000).ravel()
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
        assert abs(np.corrcoef(a[:-1], b[1:])[0, 1]) < 0.01


def test_derive_sigma_in_both_regimes() -> None:
    scaling = TimeScaling(alpha=1e-3, lam=0.1)
    assert derive_sigma(scaling) == pytest.approx(0.1 * 1e-3 * math.sqrt(2 * math.pi), rel=1e-12)
    assert derive_sigma(scaling, beta=1e3) == pytest.approx(0.1 * math.sqrt(2e-3 / 1e3), rel=1e-12)
    assert derive_sigma(TimeScaling(alpha=1e-3, lam=0.1, beta="inf"), beta="inf") == derive_sigma(scaling)
    with pytest.raises(ValueError, match="beta must be > 0"):
        derive_sigma(scaling, beta=0.0)


def test_resolve_sigma_prefers_overrides() -> None:
    assert resolve_sigma(DynamicsConfig(kind="mc", alpha=1e-3, sigma=0.5)) == 0.5
    vec = resolve_sigma(DynamicsConfig(kind="langevin", alpha=1e-3, sigma_vec=(0.1, 0.2)))
    assert np.array_equal(vec, [0.1, 0.2])
    with pytest.raises(ValueError, match="no mutation scale"):
        resolve_sigma(DynamicsConfig(kind="gd_clipped", alpha=1e-3))


def test_time_mapping_per_dynamics() -> None:
    scaling = TimeScaling(alpha=1e-3, lam=0.1)
    assert time_per_step(scaling, DynamicsKind.GD_CLIPPED) == 1e-3
    assert time_per_step(scaling, DynamicsKind.MC) == pytest.approx(1e-4)
    assert map_time(20, scaling, DynamicsKind.GD_PLAIN) == pytest.approx(0.02)
    assert np.allclose(map_time(np.arange(3), scaling, DynamicsKind.LANGEVIN), [0.0, 1e-4, 2e-4])
    assert steps_for(1.0, scaling, DynamicsKind.MC) == 10_000
    assert steps_for(1.0, scaling, DynamicsKind.GD_CLIPPED) == 1_000
    assert record_stride(0.01, scaling, DynamicsKind.MC) == 100
    with pytest.raises(ValueError, match="whole number"):
        steps_for(1.5e-4, scaling, DynamicsKind.MC)
    with pytest.raises(ValueError, match="lam must be > 0"):
        time_per_step(TimeScaling(alpha=1e-3, lam=0.0), DynamicsKind.MC)
    with pytest.raises(ValueError, match="step_index"):
        map_time(-1, scaling, DynamicsKind.MC)


# ----------------------------------------------------------------------
# Single trajectories
# ----------------------------------------------------------------------

def test_trajectory_spec_validation() -> None:
    dynamics = DynamicsConfig(kind="mc", alpha=1e-2)
    with pytest.raises(ValueError, match="arch and dataset"):
        TrajectorySpec(dynamics=dynamics, init=START, steps=1, record_stride=1)
    with pytest.raises(ValueError, match="finite"):
        _spec(init=np.array([1.0, math.inf, 0.0]))
    with pytest.raises(ValueError, match="record_stride"):
        _spec(stride=0)


def test_trajectory_records_on_scaled_grid() -> None:
    record = run_trajectory(_spec(steps=20, stride=5, lam=0.5))
    assert np.allclose(record.scaled_times, [0.0, 0.025, 0.05, 0.075, 0.1])
    assert record.param_snapshots.shape == (5, 3)
    assert np.array_equal(record.param_snapshots[0], START)
    assert record.steps == 20
    assert np.all(np.diff(record.loss_series) <= 0.0)


def test_zero_steps_records_only_the_start() -> None:
    record = run_trajectory(_spec(steps=0))
    assert record.scaled_times.tolist() == [0.0]
    assert record.loss_series[0] == pytest.approx(0.5 * START @ START)
    assert record.acceptance_rate == 0.0


def test_trajectory_is_reproducible_from_its_seed() -> None:
    a = run_trajectory(_spec(seed=99))
    b = run_trajectory(_spec(seed=99))
    c = run_trajectory(_spec(seed=100))
    assert np.array_equal(a.param_snapshots, b.param_snapshots)
    assert not np.array_equal(a.param_snapshots, c.param_snapshots)


def test_plain_descent_on_quadratic_is_geometric() -> None:
    record = run_trajectory(_spec("gd_plain", steps=10, stride=1, alpha=0.1))
    expected = np.array([START * 0.9 ** k for k in range(11)])
    assert np.allclose(record.param_snapshots, expected, rtol=1e-12)


def test_clipped_descent_moves_alpha_per_step() -> None:
    record = run_trajectory(_spec("gd_clipped", steps=5, stride=1, alpha=0.01))
    lengths = np.linalg.norm(np.diff(record.param_snapshots, axis=0), axis=1)
    assert np.allclose(lengths, 0.01, rtol=1e-12)


@pytest.mark.parametrize("kind,beta", [("langevin", math.inf), ("langevin", 10.0), ("mc", 10.0)])
def test_stochastic_dynamics_run_on_network(kind: str, beta: float, small_shallow, small_data) -> None:
    init = init_params(small_shallow, 0.1, np.random.default_rng(0))
    spec = TrajectorySpec(
        dynamics=DynamicsConfig(kind=kind, alpha=1e-3, lam=1.0, beta=beta),
        init=init,
        steps=30,
        record_stride=10,
        seed=5,
        arch=small_shallow,
        dataset=small_data,
    )
    record = run_trajectory(spec)
    assert record.param_snapshots.shape == (4, small_shallow.n_params)
    assert np.all(np.isfinite(record.loss_series))


def test_divergence_reports_step_and_trajectory() -> None:
    spec = _spec("gd_plain", objective=_CliffLoss(), init=np.array([0.0]), steps=10, stride=1, alpha=0.3)
    with pytest.raises(DivergenceError) as excinfo:
        run_trajectory(spec)
    err = excinfo.value
    assert err.step == 4
    assert err.trajectory == 0
    assert err.scaled_time == pytest.approx(1.2)

    restored = pickle.loads(pickle.dumps(err))
    assert (restored.step, restored.trajectory) == (4, 0)
    assert "non-finite loss" in str(restored)


# ----------------------------------------------------------------------
# Ensembles
# ----------------------------------------------------------------------

def test_ensemble_is_identical_for_any_worker_count() -> None:
    spec = _spec(steps=30, stride=10)
    serial = run_ensemble(spec, 12, master_seed=7, workers=1, chunk_size=3)
    parallel = run_ensemble(spec, 12, master_seed=7, workers=2, chunk_size=3)
    assert np.array_equal(serial.mean_params, parallel.mean_params)
    assert np.array_equal(serial.mean_loss, parallel.mean_loss)
    assert np.array_equal(serial.loss_stderr, parallel.loss_stderr)
    assert serial.mean_acceptance == parallel.mean_acceptance


def test_single_member_ensemble_is_trajectory_zero() -> None:
    spec = _spec(steps=20, stride=5)
    summary = run_ensemble(spec, 1, master_seed=3, n_samples=1)
    record = run_trajectory(_spec(steps=20, stride=5, seed=split_seed(3, 0)))
    assert np.array_equal(summary.mean_params, record.param_snapshots)
    assert np.array_equal(summary.samples[0].loss_series, record.loss_series)
    assert np.all(summary.loss_stderr == 0.0)


def test_ensemble_statistics_and_samples() -> None:
    summary = run_ensemble(_spec(steps=20, stride=5), 8, master_seed=1, chunk_size=3, n_samples=2)
    assert summary.n == 8
    assert [s.trajectory_index for s in summary.samples] == [0, 1]
    loss_of_mean = [QuadraticLoss(kappa=1.0, dimension=3)(x) for x in summary.mean_params]
    assert np.allclose(summary.loss_of_mean, loss_of_mean)
    # β=∞ never accepts an uphill move
    assert summary.loss_increases == 0
    assert 0.0 < summary.mean_acceptance < 1.0


def test_ensemble_statistics_ignore_trajectory_order() -> None:
    spec = _spec(steps=20, stride=5)
    records = [run_trajectory(_spec(steps=20, stride=5, seed=split_seed(4, k))) for k in range(6)]
    forward = summarize_records(records, spec)
    shuffled = summarize_records([records[i] for i in (3, 0, 5, 1, 4, 2)], spec)
    ensemble = run_ensemble(spec, 6, master_seed=4, chunk_size=4)
    for other in (shuffled, ensemble):
        assert np.allclose(forward.mean_params, other.mean_params, rtol=1e-13, atol=1e-15)
        assert np.allclose(forward.mean_loss, other.mean_loss, rtol=1e-13, atol=1e-15)
        assert np.allclose(forward.loss_stderr, other.loss_stderr, rtol=1e-9, atol=1e-7)
        assert forward.mean_acceptance == pytest.approx(other.mean_acceptance, rel=1e-12)
        assert forward.loss_increases == other.loss_increases
    assert len(forward.samples) == 6
    with pytest.raises(ValueError, match="at least one record"):
        summarize_records([], spec)


def test_mc_ensemble_with_per_parameter_sigma() -> None:
    sigma = np.array([0.1, 0.2])
    objective = LinearLoss(gradient=(1.0, -1.0))
    dynamics = DynamicsConfig(kind="mc", alpha=1e-2, sigma_vec=tuple(sigma))
    spec = TrajectorySpec(
        dynamics=dynamics, init=np.zeros(2), steps=20, record_stride=20, seed=0, objective=objective
    )
    summary = run_ensemble(spec, 500, master_seed=31)

    tilde = sigma * objective.g
    per_step = -(sigma * INV_SQRT_2PI) * tilde / np.linalg.norm(tilde)
    # an accepted step carries half of εᵢ²'s mass
    stderr = np.sqrt(20 * (sigma ** 2 / 2.0 - per_step ** 2) / 500)
    assert np.all(np.abs(summary.mean_params[-1] - 20 * per_step) <= 4.0 * stderr)
    assert summary.loss_increases == 0


def test_identical_trajectories_have_zero_delta() -> None:
    spec = _spec("gd_clipped", steps=20, stride=5)
    reference = run_trajectory(spec)
    summary = run_ensemble(spec, 4, master_seed=0, reference=reference)
    assert np.all(summary.delta == 0.0)


def test_delta_needs_matching_grids() -> None:
    reference = run_trajectory(_spec("gd_clipped", steps=20, stride=5))
    summary = run_ensemble(_spec(steps=20, stride=10), 2, master_seed=0)
    with pytest.raises(GridMismatchError, match="grids differ"):
        delta_metric(reference, summary)


def test_ensemble_size_sweep_shares_trajectories(monkeypatch) -> None:
    spec = _spec(steps=20, stride=5)
    reference = run_trajectory(_spec("gd_clipped", steps=20, stride=5))
    calls = []
    integrate = runner.run_trajectory

    def counting(trajectory_spec: TrajectorySpec):
        calls.append(trajectory_spec.trajectory_index)
        return integrate(trajectory_spec)

    monkeypatch.setattr(runner, "run_trajectory", counting)
    sweep = ensemble_size_sweep(spec, [4, 2, 4], master_seed=11, reference=reference, n_samples=2)
    # one run of the largest ensemble; smaller sizes are its prefixes
    assert sorted(calls) == [0, 1, 2, 3]
    assert list(sweep) == [2, 4]
    for i in range(2):
        assert np.array_equal(sweep[2].samples[i].param_snapshots, sweep[4].samples[i].param_snapshots)
    assert sweep[4].delta.shape == (5,)

    alone = run_ensemble(spec, 2, master_seed=11, reference=reference)
    assert np.array_equal(sweep[2].mean_params, alone.mean_params)
    assert np.array_equal(sweep[2].delta, alone.delta)
    with pytest.raises(ValueError, match="must not be empty"):
        ensemble_size_sweep(spec, [], master_seed=11, reference=reference)


def test_run_ensemble_rejects_bad_sizes() -> None:
    with pytest.raises(ValueError, match="n must be >= 1"):
        run_ensemble(_spec(), 0, master_seed=0)
    with pytest.raises(ValueError, match="chunk_size"):
        run_ensemble(_spec(), 2, master_seed=0, chunk_size=0)


def test_mean_loss_rate_on_linear_loss_matches_closed_form() -> None:
    alpha = 1e-3
    objective = LinearLoss(gradient=(0.6, -0.8))
    spec = _spec(objective=objective, init=np.zeros(2), steps=50, stride=50, alpha=alpha)
    summary = run_ensemble(spec, 2000, master_seed=2024)

    sigma = resolve_sigma(spec.dynamics)
    expected = expected_mean_loss_rate(1.0, sigma, spec.dynamics.scaling)
    assert expected == pytest.approx(-1.0, rel=1e-12)

    rate = mean_loss_rate(summary)[0]
    stderr = mean_loss_rate_stderr(summary)[0]
    assert stderr > 0.0
    assert abs(rate - expected) <= 4.0 * stderr
    assert summary.mean_acceptance == pytest.approx(0.5, abs=0.02)


def test_mean_loss_rate_at_finite_beta_matches_closed_form() -> None:
    # σ = 5e-3, so βσ|g| = 0.05 keeps the first-order drift within a few percent
    alpha, beta = 1.25e-4, 10.0
    objective = LinearLoss(gradient=(0.6, -0.8))
    spec = _spec(objective=objective, init=np.zeros(2), steps=50, stride=50, alpha=alpha, beta=beta)
    summary = run_ensemble(spec, 2000, master_seed=99)

    sigma = resolve_sigma(spec.dynamics)
    assert sigma == pytest.approx(5e-3, rel=1e-12)
    expected = expected_mean_loss_rate(1.0, sigma, spec.dynamics.scaling)
    assert expected == pytest.approx(-1.0, rel=1e-12)

    rate = mean_loss_rate(summary)[0]
    stderr = mean_loss_rate_stderr(summary)[0]
    assert abs(expected) > 4.0 * stderr
    assert abs(rate - expected) <= 4.0 * stderr
    assert summary.mean_acceptance > 0.9


def test_expected_rate_at_finite_beta() -> None:
    scaling = TimeScaling(alpha=1e-4, lam=1.0, beta=1e3)
    sigma = derive_sigma(scaling)
    # βσ²/2 = λ²α, so the rate per unit time is −λ|∇U|²
    assert expected_mean_loss_rate(2.0, sigma, scaling) == pytest.approx(-4.0, rel=1e-12)


def test_expected_rate_along_reference() -> None:
    spec = _spec("gd_clipped", steps=10, stride=5)
    reference = run_trajectory(spec)
    evo = DynamicsConfig(kind="mc", alpha=1e-2, lam=1.0)
    rates = expected_rate_along(reference, QuadraticLoss(kappa=1.0, dimension=3), evo, derive_sigma(evo.scaling))
    norms = np.linalg.norm(reference.param_snapshots, axis=1)
    assert np.allclose(rates, -norms)


def test_mean_loss_rate_needs_two_records() -> None:
    summary = run_ensemble(_spec(steps=0), 2, master_seed=0)
    with pytest.raises(ValueError, match="at least 2"):
        mean_loss_rate(summary)


# ----------------------------------------------------------------------
# Reset protocol
# ----------------------------------------------------------------------

def test_reset_protocol_delta_vanishes_at_resets() -> None:
    reference = run_trajectory(_spec("gd_clipped", steps=20, stride=2))
    summary = reset_protocol(reference, _spec(steps=20, stride=2), period=0.1, n=6, master_seed=5, chunk_size=4)
    assert summary.reset_indices.tolist() == [0, 5]
    assert np.all(summary.delta[summary.reset_indices] == 0.0)
    assert np.any(summary.delta > 0.0)
    assert np.allclose(summary.scaled_times, reference.scaled_times)


def test_reset_protocol_rejects_misaligned_period() -> None:
    reference = run_trajectory(_spec("gd_clipped", steps=20, stride=2))
    with pytest.raises(ValueError, match="multiple of the recording interval"):
        reset_protocol(reference, _spec(steps=20, stride=2), period=0.03, n=2, master_seed=0)
    with pytest.raises(ValueError, match="whole number of reset periods"):
        reset_protocol(reference, _spec(steps=20, stride=2), period=0.08, n=2, master_seed=0)
    with pytest.raises(ValueError, match="period must be > 0"):
        reset_protocol(reference, _spec(steps=20, stride=2), period=0.0, n=2, master_seed=0)
