# app/services/experiment_service.py

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from app.analysis.acceptance import acceptance_rate_limit, binomial_stderr
from app.analysis.gradcheck import grad_check_suite
from app.analysis.moments import drift_diffusion_closed_form, estimate_drift_diffusion
from app.analysis.stationarity import stationary_check
from app.analysis.toy_losses import LinearLoss, QuadraticLoss
from app.config import Settings, get_settings
from app.dynamics.mutation import MutationConfig
from app.ensemble.metrics import (
    expected_mean_loss_rate,
    expected_rate_along,
    mean_loss_rate,
    mean_loss_rate_stderr,
)
from app.ensemble.reset import reset_protocol
from app.ensemble.runner import EnsembleSummary, ensemble_size_sweep, run_ensemble, split_seed
from app.ensemble.scaling import derive_sigma, record_stride, resolve_sigma, steps_for
from app.ensemble.trajectory import TrajectoryRecord, TrajectorySpec, run_trajectory
from app.model.dataset import Dataset, make_dataset
from app.model.networks import NetworkObjective, init_params
from app.schemas.architecture import NetworkArchitecture
from app.schemas.dynamics import DynamicsConfig, DynamicsKind
from app.schemas.experiments import ExperimentConfig, PresetName, RunManifest, Scale
from app.services.output_service import (
    PresetResult,
    Table,
    build_manifest,
    lam_label,
    timeseries_table,
    write_manifest,
    write_result,
)
from app.services.plot_service import default_plot_specs, emit_plot

logger = logging.getLogger(__name__)

INF = math.inf

# Linear toy gradient used by the drift/diffusion preset (|g| = 1).
LINEAR_TOY_GRADIENT = (0.5, -0.5, 0.5, -0.5)
ACCEPTANCE_SIGMA_LADDER = (1e-1, 1e-3, 1e-5)
DEFAULT_TRACKED_WEIGHTS = (0, 1, 2, 3)

LOSS_TOLERANCE = 0.05          # |⟨U_evo⟩ − U_gd| / U_gd(0), shallow β=∞
DEEP_LOSS_TOLERANCE = 0.10
RESET_LOSS_TOLERANCE = 2 * LOSS_TOLERANCE
GRAD_TOLERANCE = 1e-5
VARIANCE_TOLERANCE = 0.05
ACCEPTANCE_TOLERANCE = 0.005
N_STDERR = 3.0
MEAN_N_STDERR = 4.0
MIN_RESOLUTION = 2 * N_STDERR
ENERGY_MIN_PVALUE = 1e-3


class ExperimentCheckError(RuntimeError):
    """Raised when `check=True` and at least one acceptance check failed."""

    def __init__(self, failed: list[str]) -> None:
        super().__init__(f"acceptance check(s) failed: {', '.join(failed)}")
        self.failed = failed


# ----------------------------------------------------------------------
# Preset tables
# ----------------------------------------------------------------------

_FIG_DESK = dict(arch=NetworkArchitecture.shallow(10), k=100, alpha=1e-3, beta=INF, sigma0=1e-2, n=200, t_max=2.0)
_FIG_FULL = dict(arch=NetworkArchitecture.shallow(30), k=1000, alpha=1e-5, beta=INF, sigma0=1e-2, n=1000, t_max=10.0)
_FINITE_DESK = dict(arch=NetworkArchitecture.shallow(32), k=100, alpha=1e-4, lam=1.0, beta=1e3, sigma0=1e-2, t_max=1.0)
_FINITE_FULL = dict(arch=NetworkArchitecture.shallow(256), k=1000, alpha=1e-4, lam=1.0, beta=1e3, sigma0=1e-2, t_max=10.0)

PRESET_DEFAULTS: dict[PresetName, dict[Scale, dict[str, Any]]] = {
    PresetName.FIG1: {
        Scale.DESK: {**_FIG_DESK, "lam": 0.1, "lam_ladder": [1.0]},
        Scale.FULL: {**_FIG_FULL, "lam": 0.1, "lam_ladder": [1.0]},
    },
    PresetName.FIG2: {
        Scale.DESK: {**_FIG_DESK, "lam_ladder": [1.0, 1 / 3, 0.1]},
        Scale.FULL: {**_FIG_FULL, "lam_ladder": [1.0, 0.1, 0.01]},
    },
    PresetName.FIG3: {
        Scale.DESK: {**_FIG_DESK, "lam_ladder": [1.0, 1 / 3, 0.1]},
        Scale.FULL: {**_FIG_FULL, "lam_ladder": [1.0, 0.1, 0.01]},
    },
    PresetName.DEEP: {
        Scale.DESK: dict(
            arch=NetworkArchitecture.deep(4, 16), k=100, alpha=1e-3, beta=INF, sigma0=1e-2,
            n=100, t_max=1.0, lam_ladder=[1.0, 0.1],
        ),
        Scale.FULL: dict(
            arch=NetworkArchitecture.deep(8, 32), k=1000, alpha=1e-5, beta=INF, sigma0=1e-2,
            n=100, t_max=10.0, lam_ladder=[1.0, 0.1],
        ),
    },
    PresetName.FINITE_BETA: {
        Scale.DESK: {**_FINITE_DESK, "ensemble_sizes": [50, 200, 500]},
        Scale.FULL: {**_FINITE_FULL, "ensemble_sizes": [50, 200, 1000]},
    },
    PresetName.RESET: {
        Scale.DESK: {**_FIG_DESK, "lam": 0.1, "reset_period": 0.5},
        Scale.FULL: {**_FINITE_FULL, "n": 152, "t_max": 20.0, "reset_period": 5.0},
    },
    PresetName.BOLTZMANN: {
        scale: dict(kappa=1.0, dimension=2, beta=10.0, chain_steps=1_000_000, burn_in=100_000)
        for scale in Scale
    },
    PresetName.DRIFT_DIFFUSION: {
        scale: dict(
            dimension=len(LINEAR_TOY_GRADIENT), beta=10.0, alpha=1e-7, lam=1.0,
            n_probes=100_000, n=10_000, rate_steps=200,
            # σ = 3e-3, βσ|g| = 0.03
            drift_alpha=4.5e-5, drift_probes=4_000_000,
        )
        for scale in Scale
    },
    PresetName.GRAD_CHECK: {
        Scale.DESK: dict(k=100, grad_points=100, deep_grad_points=20, spot_coordinates=20),
        Scale.FULL: dict(k=1000, grad_points=100, deep_grad_points=20, spot_coordinates=20),
    },
    PresetName.CUSTOM: {
        scale: dict(
            arch=NetworkArchitecture.shallow(10), k=100, alpha=1e-3, lam=0.1, beta=INF,
            sigma0=1e-2, n=50, t_max=1.0,
        )
        for scale in Scale
    },
}

_NETWORK_PRESETS = {
    PresetName.FIG1, PresetName.FIG2, PresetName.FIG3, PresetName.DEEP,
    PresetName.FINITE_BETA, PresetName.RESET, PresetName.CUSTOM,
}
_DESCENT_ONLY_FIELDS = ("lam", "lam_ladder", "beta")


def resolve_config(config: ExperimentConfig, settings: Optional[Settings] = None) -> ExperimentConfig:
    """
    Fill every override left as None from the preset table and the process
    settings. Fields a preset does not use stay None.
    """
    settings = settings or get_settings()
    defaults = dict(PRESET_DEFAULTS[config.preset][config.scale])
    if config.dynamics.is_gradient_descent:
        for name in _DESCENT_ONLY_FIELDS:
            defaults.pop(name, None)

    master_seed = config.master_seed if config.master_seed is not None else settings.master_seed
    defaults.update(
        master_seed=master_seed,
        init_seed=settings.master_seed,
        workers=settings.workers,
        output_dir=settings.output_dir / f"{config.preset.value}_{config.scale.value}",
    )
    if config.preset in _NETWORK_PRESETS:
        defaults.update(record_interval=settings.record_interval, tracked_weights=list(DEFAULT_TRACKED_WEIGHTS))

    update = {name: value for name, value in defaults.items() if getattr(config, name) is None}
    merged = config.model_dump()
    merged.update(update)
    return ExperimentConfig.model_validate(merged)


# ----------------------------------------------------------------------
# Shared network plumbing
# ----------------------------------------------------------------------

@dataclass
class NetworkSetup:
    arch: NetworkArchitecture
    data: Dataset
    init: np.ndarray

    @property
    def objective(self) -> NetworkObjective:
        return NetworkObjective(self.arch, self.data)


def _network_setup(cfg: ExperimentConfig) -> NetworkSetup:
    init = init_params(cfg.arch, cfg.sigma0, np.random.default_rng(cfg.init_seed))
    return NetworkSetup(cfg.arch, make_dataset(cfg.k), init)


def _descent_kind(beta: Optional[float]) -> DynamicsKind:
    return DynamicsKind.GD_CLIPPED if beta is None or math.isinf(beta) else DynamicsKind.GD_PLAIN


def _trajectory_spec(cfg: ExperimentConfig, setup: NetworkSetup, dynamics: DynamicsConfig) -> TrajectorySpec:
    scaling = dynamics.scaling
    return TrajectorySpec(
        dynamics=dynamics,
        init=setup.init,
        steps=steps_for(cfg.t_max, scaling, dynamics.kind),
        record_stride=record_stride(cfg.record_interval, scaling, dynamics.kind),
        arch=setup.arch,
        dataset=setup.data,
    )


def _gd_reference(cfg: ExperimentConfig, setup: NetworkSetup, kind: DynamicsKind) -> TrajectoryRecord:
    dynamics = DynamicsConfig(kind=kind, alpha=cfg.alpha, grad_norm_floor=get_settings().grad_norm_floor)
    spec = _trajectory_spec(cfg, setup, dynamics)
    logger.info("Gradient-descent reference: %s, %s, %d steps", kind.value, setup.arch.describe(), spec.steps)
    return run_trajectory(spec)


def _evolution_spec(cfg: ExperimentConfig, setup: NetworkSetup, lam: float) -> TrajectorySpec:
    dynamics = DynamicsConfig(
        kind=cfg.dynamics,
        alpha=cfg.alpha,
        lam=lam,
        beta=cfg.beta,
        grad_norm_floor=get_settings().grad_norm_floor,
    )
    return _trajectory_spec(cfg, setup, dynamics)


def _ensemble_options(cfg: ExperimentConfig) -> dict[str, Any]:
    return dict(
        workers=cfg.workers,
        chunk_size=get_settings().ensemble_chunk_size,
        n_samples=min(cfg.n_samples, cfg.n or 0),
    )


def _loss_deviation(reference: TrajectoryRecord, summary: EnsembleSummary) -> np.ndarray:
    """|⟨U_evo(t)⟩ − U_gd(t)| relative to the initial loss."""
    return np.abs(summary.mean_loss - reference.loss_series) / reference.loss_series[0]


def _tracked(cfg: ExperimentConfig, n_params: int) -> list[int]:
    return [w for w in cfg.tracked_weights if w < n_params]


def _check(passed: bool, value: Any, threshold: Any, detail: str) -> dict[str, Any]:
    return {"passed": bool(passed), "value": value, "threshold": threshold, "detail": detail}


def _ensemble_entry(reference: TrajectoryRecord, summary: EnsembleSummary, spec: TrajectorySpec) -> dict[str, Any]:
    deviation = _loss_deviation(reference, summary)
    return {
        "sigma": resolve_sigma(spec.dynamics),
        "steps": spec.steps,
        "n": summary.n,
        "delta_final": summary.delta[-1],
        "delta_mean": float(np.mean(summary.delta[1:])) if summary.delta.size > 1 else 0.0,
        "max_rel_loss_deviation": float(deviation.max()),
        "final_gd_loss": reference.loss_series[-1],
        "final_mean_loss": summary.mean_loss[-1],
        "final_loss_of_mean": summary.loss_of_mean[-1],
        "final_loss_stderr": summary.loss_stderr[-1],
        "mean_acceptance": summary.mean_acceptance,
        "loss_increases": summary.loss_increases,
    }


# ----------------------------------------------------------------------
# Network presets
# ----------------------------------------------------------------------

def _run_lambda_ladder(cfg: ExperimentConfig, lams: list[float]) -> tuple[PresetResult, dict[float, dict[str, Any]]]:
    """
    One descent reference and one ensemble per λ under identical seeds.
    timeseries.csv follows the first λ of `lams`; delta.csv columns are
    ordered by decreasing λ.
    """
    setup = _network_setup(cfg)
    reference = _gd_reference(cfg, setup, _descent_kind(cfg.beta))
    options = _ensemble_options(cfg)

    summaries: dict[float, EnsembleSummary] = {}
    entries: dict[float, dict[str, Any]] = {}
    for i, lam in enumerate(lams):
        spec = _evolution_spec(cfg, setup, lam)
        summary = run_ensemble(
            spec, cfg.n, cfg.master_seed, reference=reference,
            **(options if i == 0 else {**options, "n_samples": 0}),
        )
        summaries[lam] = summary
        entries[lam] = _ensemble_entry(reference, summary, spec)

    main = summaries[lams[0]]
    main_dynamics = _evolution_spec(cfg, setup, lams[0]).dynamics
    entries[lams[0]]["mean_loss_rate"] = mean_loss_rate(main)
    entries[lams[0]]["expected_mean_loss_rate"] = expected_rate_along(
        reference, setup.objective, main_dynamics, resolve_sigma(main_dynamics)
    )[:-1]

    t = reference.scaled_times
    loss_cols, loss_vals = ["t", "gd_loss"], [t, reference.loss_series]
    for lam, summary in summaries.items():
        label = lam_label(lam)
        loss_cols += [f"evo_mean_loss_lam_{label}", f"evo_loss_stderr_lam_{label}", f"evo_loss_of_mean_lam_{label}"]
        loss_vals += [summary.mean_loss, summary.loss_stderr, summary.loss_of_mean]
    by_lam = sorted(summaries, reverse=True)
    result = PresetResult(
        tables={
            "timeseries.csv": timeseries_table(reference, main, _tracked(cfg, setup.arch.n_params)),
            "loss.csv": Table(loss_cols, loss_vals),
            "delta.csv": Table(
                ["t"] + [f"delta_lam_{lam_label(lam)}" for lam in by_lam],
                [t] + [summaries[lam].delta for lam in by_lam],
            ),
        },
        summary={
            "architecture": setup.arch.describe(),
            "n_params": setup.arch.n_params,
            "initial_loss": reference.loss_series[0],
            "runs": {lam_label(lam): entry for lam, entry in entries.items()},
        },
    )
    return result, entries


def _monotone_check(entries: dict[float, dict[str, Any]]) -> dict[str, Any]:
    increases = sum(entry["loss_increases"] for entry in entries.values())
    return _check(increases == 0, increases, 0, "loss increases over every β=∞ trajectory")


def run_fig1(cfg: ExperimentConfig) -> PresetResult:
    lams = [cfg.lam] + [lam for lam in (cfg.lam_ladder or []) if lam != cfg.lam]
    result, entries = _run_lambda_ladder(cfg, lams)
    main = entries[cfg.lam]
    result.checks["monotone_loss"] = _monotone_check(entries)
    result.checks["mean_loss_tracks_gd"] = _check(
        main["max_rel_loss_deviation"] < LOSS_TOLERANCE,
        main["max_rel_loss_deviation"], LOSS_TOLERANCE,
        f"max_t |<U_evo> - U_gd| / U_gd(0) at lam={lam_label(cfg.lam)}",
    )
    for lam in lams[1:]:
        if lam > cfg.lam:
            result.checks[f"delta_below_lam_{lam_label(lam)}"] = _check(
                main["delta_final"] < entries[lam]["delta_final"],
                main["delta_final"], entries[lam]["delta_final"],
                f"Delta(t_max) at lam={lam_label(cfg.lam)} below lam={lam_label(lam)}",
            )
    return result


def run_fig2(cfg: ExperimentConfig) -> PresetResult:
    lams = sorted(cfg.lam_ladder)
    result, entries = _run_lambda_ladder(cfg, lams)
    finals = [entries[lam]["delta_final"] for lam in lams]
    result.checks["monotone_loss"] = _monotone_check(entries)
    result.checks["delta_ordered_by_lam"] = _check(
        all(a < b for a, b in zip(finals, finals[1:])),
        finals, "increasing with lam",
        "Delta(t_max) for lam = " + ", ".join(lam_label(lam) for lam in lams),
    )
    return result


def run_fig3(cfg: ExperimentConfig) -> PresetResult:
    lams = sorted(cfg.lam_ladder)
    result, entries = _run_lambda_ladder(cfg, lams)
    smallest = entries[lams[0]]["max_rel_loss_deviation"]
    result.checks["monotone_loss"] = _monotone_check(entries)
    result.checks["smallest_lam_tracks_gd"] = _check(
        smallest < LOSS_TOLERANCE, smallest, LOSS_TOLERANCE,
        f"max_t |<U_evo> - U_gd| / U_gd(0) at lam={lam_label(lams[0])}",
    )
    return result


def run_deep(cfg: ExperimentConfig) -> PresetResult:
    lams = sorted(cfg.lam_ladder)
    result, entries = _run_lambda_ladder(cfg, lams)
    small, large = entries[lams[0]], entries[lams[-1]]
    result.checks["delta_improves_with_smaller_lam"] = _check(
        small["delta_final"] < large["delta_final"],
        small["delta_final"], large["delta_final"],
        f"Delta(t_max) at lam={lam_label(lams[0])} below lam={lam_label(lams[-1])}",
    )
    result.checks["mean_loss_tracks_gd"] = _check(
        small["max_rel_loss_deviation"] < DEEP_LOSS_TOLERANCE,
        small["max_rel_loss_deviation"], DEEP_LOSS_TOLERANCE,
        f"max_t |<U_evo> - U_gd| / U_gd(0) at lam={lam_label(lams[0])}",
    )
    return result


def run_finite_beta(cfg: ExperimentConfig) -> PresetResult:
    setup = _network_setup(cfg)
    reference = _gd_reference(cfg, setup, DynamicsKind.GD_PLAIN)
    spec = _evolution_spec(cfg, setup, cfg.lam)
    options = dict(
        workers=cfg.workers,
        chunk_size=get_settings().ensemble_chunk_size,
        n_samples=min(cfg.n_samples, min(cfg.ensemble_sizes)),
    )
    summaries = ensemble_size_sweep(spec, cfg.ensemble_sizes, cfg.master_seed, reference, **options)

    sizes = sorted(summaries)
    largest = summaries[sizes[-1]]
    t = reference.scaled_times
    delta_means = [float(np.mean(summaries[n].delta[1:])) for n in sizes]
    result = PresetResult(
        tables={
            "timeseries.csv": timeseries_table(reference, largest, _tracked(cfg, setup.arch.n_params)),
            "loss.csv": Table(
                ["t", "gd_loss", "evo_mean_loss", "evo_loss_stderr", "evo_loss_of_mean"],
                [t, reference.loss_series, largest.mean_loss, largest.loss_stderr, largest.loss_of_mean],
            ),
            "delta.csv": Table(["t"] + [f"delta_n_{n}" for n in sizes], [t] + [summaries[n].delta for n in sizes]),
        },
        summary={
            "architecture": setup.arch.describe(),
            "beta": cfg.beta,
            "initial_loss": reference.loss_series[0],
            "runs": {str(n): _ensemble_entry(reference, summaries[n], spec) for n in sizes},
        },
    )
    result.checks["delta_decreases_with_n"] = _check(
        all(a > b for a, b in zip(delta_means, delta_means[1:])),
        delta_means, "decreasing with n",
        "time-averaged Delta(t) for n = " + ", ".join(str(n) for n in sizes),
    )
    return result


def run_reset(cfg: ExperimentConfig) -> PresetResult:
    setup = _network_setup(cfg)
    reference = _gd_reference(cfg, setup, _descent_kind(cfg.beta))
    spec = _evolution_spec(cfg, setup, cfg.lam)
    summary = reset_protocol(reference, spec, cfg.reset_period, cfg.n, cfg.master_seed, **_ensemble_options(cfg))

    deviation = _loss_deviation(reference, summary)
    at_resets = summary.delta[summary.reset_indices]
    t = reference.scaled_times
    result = PresetResult(
        tables={
            "timeseries.csv": timeseries_table(reference, summary, _tracked(cfg, setup.arch.n_params)),
            "loss.csv": Table(
                ["t", "gd_loss", "evo_mean_loss", "evo_loss_stderr"],
                [t, reference.loss_series, summary.mean_loss, summary.loss_stderr],
            ),
            "delta.csv": Table(["t", "delta"], [t, summary.delta]),
        },
        summary={
            "architecture": setup.arch.describe(),
            "beta": cfg.beta,
            "reset_period": cfg.reset_period,
            "reset_times": t[summary.reset_indices],
            "delta_at_resets": at_resets,
            "run": _ensemble_entry(reference, summary, spec),
        },
    )
    result.checks["delta_zero_at_resets"] = _check(
        bool(np.all(at_resets == 0.0)), float(np.max(at_resets)), 0.0, "Delta immediately after every reset"
    )
    result.checks["windowed_mean_tracks_gd"] = _check(
        deviation.max() < RESET_LOSS_TOLERANCE, float(deviation.max()), RESET_LOSS_TOLERANCE,
        "max_t |<U_evo> - U_gd| / U_gd(0) with resets",
    )
    return result


def run_custom(cfg: ExperimentConfig) -> PresetResult:
    setup = _network_setup(cfg)
    if cfg.dynamics.is_gradient_descent:
        record = _gd_reference(cfg, setup, cfg.dynamics)
        return PresetResult(
            tables={"loss.csv": Table(["t", "gd_loss"], [record.scaled_times, record.loss_series])},
            summary={"architecture": setup.arch.describe(), "final_loss": record.loss_series[-1]},
        )
    result, _ = _run_lambda_ladder(cfg, [cfg.lam])
    return result


# ----------------------------------------------------------------------
# Toy-loss and gradient presets
# ----------------------------------------------------------------------

def run_boltzmann(cfg: ExperimentConfig) -> PresetResult:
    toy = QuadraticLoss(cfg.kappa, cfg.dimension)
    report = stationary_check(
        toy, cfg.beta, cfg.chain_steps, cfg.burn_in, np.random.default_rng(split_seed(cfg.master_seed, 0))
    )
    rel = report.variance_rel_error
    expected = np.full(report.energy_counts.size, report.energy_counts.sum() / report.energy_counts.size)
    result = PresetResult(
        tables={
            "energy.csv": Table(
                ["bin_lower", "bin_upper", "observed", "expected"],
                [report.energy_edges[:-1], report.energy_edges[1:], report.energy_counts.astype(np.int64), expected],
            )
        },
        summary={
            "kappa": cfg.kappa,
            "dimension": cfg.dimension,
            "beta": cfg.beta,
            "sigma": report.sigma,
            "acceptance_rate": report.acceptance_rate,
            "empirical_mean": report.mean,
            "mean_stderr": report.mean_stderr,
            "empirical_variance": report.variance,
            "boltzmann_variance": report.boltzmann_variance,
            "variance_rel_error": rel,
            "energy_chi2": report.energy_chi2,
            "energy_pvalue": report.energy_pvalue,
        },
    )
    result.checks["variance_matches_boltzmann"] = _check(
        bool(np.all(rel < VARIANCE_TOLERANCE)), float(rel.max()), VARIANCE_TOLERANCE,
        "per-coordinate |var - 1/(beta kappa)| / (1/(beta kappa))",
    )
    result.checks["mean_near_zero"] = _check(
        bool(np.all(np.abs(report.mean_z) <= MEAN_N_STDERR)), float(np.abs(report.mean_z).max()), MEAN_N_STDERR,
        "|mean| in batch-means standard errors",
    )
    result.checks["energy_marginal"] = _check(
        report.energy_pvalue > ENERGY_MIN_PVALUE, report.energy_pvalue, ENERGY_MIN_PVALUE,
        "chi-square p-value of beta*U against Gamma(d/2, 1)",
    )
    return result


def _moment_regime(
    cfg: ExperimentConfig, toy: LinearLoss, beta: float, alpha: float, n_probes: int, stream: int
) -> dict[str, Any]:
    dynamics = DynamicsConfig(kind=DynamicsKind.MC, alpha=alpha, lam=cfg.lam, beta=beta)
    sigma = derive_sigma(dynamics.scaling)
    report = estimate_drift_diffusion(
        toy, np.zeros(toy.dimension), MutationConfig(sigma, beta), n_probes,
        np.random.default_rng(split_seed(cfg.master_seed, stream)),
    )
    drift, second = drift_diffusion_closed_form(toy.g, sigma, beta)
    drift_z = report.drift_z(drift)
    second_z = report.second_moment_z(second)
    return {
        "beta": beta,
        "alpha": alpha,
        "sigma": sigma,
        "n_probes": n_probes,
        "acceptance_rate": report.acceptance_rate,
        "drift": report.drift,
        "drift_stderr": report.drift_stderr,
        "expected_drift": drift,
        "second_moment": report.second_moment,
        "second_moment_stderr": report.second_moment_stderr,
        "expected_second_moment": second,
        "max_abs_drift_z": float(np.abs(drift_z).max()),
        "max_abs_second_moment_z": float(np.abs(second_z).max()),
        # how far a driftless kernel would sit from the prediction
        "drift_resolution": float(np.min(np.abs(drift) / report.drift_stderr)),
    }


def _rate_regime(cfg: ExperimentConfig, toy: LinearLoss, beta: float, alpha: float, stream: int) -> dict[str, Any]:
    dynamics = DynamicsConfig(kind=DynamicsKind.MC, alpha=alpha, lam=cfg.lam, beta=beta)
    spec = TrajectorySpec(
        dynamics=dynamics, init=np.zeros(toy.dimension), steps=cfg.rate_steps,
        record_stride=cfg.rate_steps, objective=toy,
    )
    summary = run_ensemble(
        spec, cfg.n, split_seed(cfg.master_seed, stream),
        workers=cfg.workers, chunk_size=get_settings().ensemble_chunk_size,
    )
    measured = float(mean_loss_rate(summary)[0])
    stderr = float(mean_loss_rate_stderr(summary)[0])
    expected = expected_mean_loss_rate(np.linalg.norm(toy.g), resolve_sigma(dynamics), dynamics.scaling)
    return {"beta": beta, "alpha": alpha, "measured": measured, "stderr": stderr, "expected": expected,
            "z": (measured - expected) / stderr, "resolution": abs(expected) / stderr}


def run_drift_diffusion(cfg: ExperimentConfig) -> PresetResult:
    """
    Jump moments, acceptance ladder and mean-loss rate on a linear toy loss.

    The finite-β second moment is measured at cfg.alpha, where σ is small
    enough for σ²δᵢⱼ to hold. The finite-β drift and loss rate use
    cfg.drift_alpha, where βσ|g| is still small but the drift stands well
    clear of its standard error.
    """
    toy = LinearLoss(tuple(float(v) for v in np.resize(LINEAR_TOY_GRADIENT, cfg.dimension)))
    regimes = {
        "beta_inf": _moment_regime(cfg, toy, INF, cfg.alpha, cfg.n_probes, 0),
        "beta_finite": _moment_regime(cfg, toy, cfg.beta, cfg.alpha, cfg.n_probes, 1),
        "beta_finite_drift": _moment_regime(cfg, toy, cfg.beta, cfg.drift_alpha, cfg.drift_probes, 5),
    }
    rates = acceptance_rate_limit(
        toy, np.zeros(toy.dimension), ACCEPTANCE_SIGMA_LADDER, cfg.n_probes,
        np.random.default_rng(split_seed(cfg.master_seed, 2)),
    )
    loss_rates = {
        "beta_inf": _rate_regime(cfg, toy, INF, cfg.alpha, 3),
        "beta_finite": _rate_regime(cfg, toy, cfg.beta, cfg.drift_alpha, 4),
    }

    coords = np.arange(toy.dimension, dtype=np.int64)
    cols, vals = ["coordinate"], [coords]
    for name, regime in regimes.items():
        cols += [f"drift_{name}", f"drift_stderr_{name}", f"expected_drift_{name}",
                 f"second_moment_{name}", f"expected_second_moment_{name}"]
        vals += [regime["drift"], regime["drift_stderr"], regime["expected_drift"],
                 np.diag(regime["second_moment"]), np.diag(regime["expected_second_moment"])]
    ladder = np.asarray(ACCEPTANCE_SIGMA_LADDER)
    result = PresetResult(
        tables={
            "moments.csv": Table(cols, vals),
            "acceptance.csv": Table(["sigma", "rate", "stderr"], [ladder, rates, binomial_stderr(rates, cfg.n_probes)]),
        },
        summary={
            "gradient": toy.gradient,
            "n_probes": cfg.n_probes,
            "moments": regimes,
            "acceptance": {"sigma": ladder, "rate": rates},
            "mean_loss_rate": loss_rates,
        },
    )
    inf_worst = max(regimes["beta_inf"]["max_abs_drift_z"], regimes["beta_inf"]["max_abs_second_moment_z"])
    result.checks["moments_beta_inf"] = _check(
        inf_worst <= N_STDERR, inf_worst, N_STDERR, "worst |z| over drift and every second-moment entry"
    )
    second_z = regimes["beta_finite"]["max_abs_second_moment_z"]
    result.checks["second_moment_beta_finite"] = _check(
        second_z <= N_STDERR, second_z, N_STDERR, "worst |z| over every second-moment entry"
    )
    drift_z = regimes["beta_finite_drift"]["max_abs_drift_z"]
    result.checks["drift_beta_finite"] = _check(
        drift_z <= N_STDERR, drift_z, N_STDERR, "worst |z| of the drift at drift_alpha"
    )
    resolution = regimes["beta_finite_drift"]["drift_resolution"]
    result.checks["drift_resolved_beta_finite"] = _check(
        resolution >= MIN_RESOLUTION, resolution, MIN_RESOLUTION,
        "smallest |expected drift| in standard errors; a driftless kernel must fail drift_beta_finite",
    )
    off_half = float(np.abs(rates - 0.5).max())
    result.checks["acceptance_half"] = _check(
        off_half < ACCEPTANCE_TOLERANCE, off_half, ACCEPTANCE_TOLERANCE, "max |rate - 1/2| over the sigma ladder"
    )
    for name, rate in loss_rates.items():
        result.checks[f"mean_loss_rate_{name}"] = _check(
            abs(rate["z"]) <= N_STDERR, abs(rate["z"]), N_STDERR, "ensemble d<U>/dt against the closed form"
        )
    finite_rate = loss_rates["beta_finite"]["resolution"]
    result.checks["mean_loss_rate_resolved_beta_finite"] = _check(
        finite_rate >= MIN_RESOLUTION, finite_rate, MIN_RESOLUTION, "|expected rate| in standard errors"
    )
    return result


def run_grad_check(cfg: ExperimentConfig) -> PresetResult:
    data = make_dataset(cfg.k)
    shallow = grad_check_suite(
        NetworkArchitecture.shallow(30), cfg.grad_points, np.random.default_rng(split_seed(cfg.master_seed, 0)), data
    )
    deep = grad_check_suite(
        NetworkArchitecture.deep(8, 32), cfg.deep_grad_points,
        np.random.default_rng(split_seed(cfg.master_seed, 1)), data, n_coordinates=cfg.spot_coordinates,
    )
    worst = max(shallow.max_rel_error, deep.max_rel_error)
    points = np.concatenate([np.arange(shallow.n_points), np.arange(deep.n_points)]).astype(np.int64)
    is_deep = np.concatenate([np.zeros(shallow.n_points), np.ones(deep.n_points)]).astype(np.int64)
    result = PresetResult(
        tables={
            "gradcheck.csv": Table(
                ["point", "deep", "max_rel_error"],
                [points, is_deep, np.concatenate([shallow.per_point_max, deep.per_point_max])],
            )
        },
        summary={
            "max_rel_error": worst,
            "k": cfg.k,
            "shallow": {"architecture": shallow.architecture, "points": shallow.n_points,
                        "max_rel_error": shallow.max_rel_error},
            "deep": {"architecture": deep.architecture, "points": deep.n_points,
                     "coordinates_per_point": deep.coordinates_per_point, "max_rel_error": deep.max_rel_error},
        },
    )
    result.checks["gradient_oracle"] = _check(worst < GRAD_TOLERANCE, worst, GRAD_TOLERANCE, "max relative error")
    return result


PRESET_RUNNERS: dict[PresetName, Callable[[ExperimentConfig], PresetResult]] = {
    PresetName.FIG1: run_fig1,
    PresetName.FIG2: run_fig2,
    PresetName.FIG3: run_fig3,
    PresetName.DEEP: run_deep,
    PresetName.FINITE_BETA: run_finite_beta,
    PresetName.RESET: run_reset,
    PresetName.BOLTZMANN: run_boltzmann,
    PresetName.DRIFT_DIFFUSION: run_drift_diffusion,
    PresetName.GRAD_CHECK: run_grad_check,
    PresetName.CUSTOM: run_custom,
}


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------

def run_experiment(
    config: ExperimentConfig,
    *,
    out_dir: Optional[Path] = None,
    check: bool = False,
    plot: bool = False,
) -> tuple[PresetResult, RunManifest, Path]:
    """
    Resolve the config, run its preset, and write CSV/JSON (and SVG with
    `plot`) into the output directory.

    With `check`, the acceptance checks are written to summary.json and any
    failure raises ExperimentCheckError after all files are written.
    """
    if out_dir is not None:
        config = config.model_copy(update={"output_dir": Path(out_dir)})
    resolved = resolve_config(config)
    out = Path(resolved.output_dir).expanduser().resolve()
    logger.info("Running preset %s (scale=%s) into %s", resolved.preset.value, resolved.scale.value, out)

    started_at = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    result = PRESET_RUNNERS[resolved.preset](resolved)
    if not check:
        result.checks = {}
    files = write_result(out, result)

    if plot:
        headers = {name: table.columns for name, table in result.tables.items()}
        weights = resolved.tracked_weights or [0]
        for csv_path, spec in default_plot_specs(out, headers, weight_id=weights[0]):
            files.append(emit_plot(csv_path, spec))

    duration = time.perf_counter() - t0
    manifest = build_manifest(
        resolved, started_at, duration, files + [out / "manifest.json"], out,
        checks_passed=result.checks_passed if check else None,
    )
    write_manifest(out, manifest)
    logger.info("Preset %s finished in %.1f s", resolved.preset.value, duration)

    if check:
        failed = [name for name, outcome in result.checks.items() if not outcome["passed"]]
        for name in failed:
            logger.warning("Acceptance check failed: %s (%s)", name, result.checks[name])
        if failed:
            raise ExperimentCheckError(failed)
    return result, manifest, out
