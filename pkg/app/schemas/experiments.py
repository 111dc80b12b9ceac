from __future__ import annotations

import math
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.architecture import NetworkArchitecture
from app.schemas.dynamics import DynamicsKind, coerce_beta


class PresetName(str, Enum):
    FIG1 = "fig1"
    FIG2 = "fig2"
    FIG3 = "fig3"
    DEEP = "deep"
    FINITE_BETA = "finite_beta"
    RESET = "reset"
    BOLTZMANN = "boltzmann"
    DRIFT_DIFFUSION = "drift_diffusion"
    GRAD_CHECK = "grad_check"
    CUSTOM = "custom"


class Scale(str, Enum):
    DESK = "desk"
    FULL = "full"


# Presets compared against clipped descent only make sense at β=∞.
BETA_INFINITE_PRESETS = {PresetName.FIG1, PresetName.FIG2, PresetName.FIG3, PresetName.DEEP}
BETA_FINITE_PRESETS = {PresetName.FINITE_BETA, PresetName.BOLTZMANN, PresetName.DRIFT_DIFFUSION}
ANALYSIS_PRESETS = {PresetName.BOLTZMANN, PresetName.DRIFT_DIFFUSION, PresetName.GRAD_CHECK}


class ExperimentConfig(BaseModel):
    """
    One experiment: a preset plus optional overrides.

    Every override left as None is filled from the preset table for the
    chosen scale (see experiment_service.resolve_config). The resolved
    config, with every field its preset uses filled in, is what
    RunManifest stores.

    beta accepts a number or "inf".
    """

    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="strings")

    preset: PresetName = PresetName.CUSTOM
    scale: Scale = Scale.DESK

    # network + data
    arch: Optional[NetworkArchitecture] = None
    k: Optional[int] = Field(None, gt=0, description="Number of training points K.")
    sigma0: Optional[float] = Field(None, gt=0, description="Std of the initial parameters.")

    # dynamics
    dynamics: DynamicsKind = DynamicsKind.MC
    alpha: Optional[float] = Field(None, gt=0)
    lam: Optional[float] = Field(None, gt=0)
    lam_ladder: Optional[list[float]] = None
    beta: Optional[float] = None

    # ensemble
    n: Optional[int] = Field(None, gt=0)
    ensemble_sizes: Optional[list[int]] = None
    t_max: Optional[float] = Field(None, gt=0)
    record_interval: Optional[float] = Field(None, gt=0)
    n_samples: int = Field(25, ge=0, description="Individual trajectories kept in timeseries.csv.")
    tracked_weights: Optional[list[int]] = None
    reset_period: Optional[float] = Field(None, gt=0)

    # seeds
    master_seed: Optional[int] = Field(None, ge=0)
    init_seed: Optional[int] = Field(None, ge=0, description="Seed of the initial network only.")

    # toy-loss analyses
    n_probes: Optional[int] = Field(None, ge=1000)
    drift_alpha: Optional[float] = Field(
        None, gt=0, description="Step size behind the finite-beta drift and loss-rate probes."
    )
    drift_probes: Optional[int] = Field(None, ge=1000, description="Probes for the finite-beta drift.")
    chain_steps: Optional[int] = Field(None, gt=0)
    burn_in: Optional[int] = Field(None, ge=0)
    rate_steps: Optional[int] = Field(None, gt=0)
    kappa: Optional[float] = Field(None, gt=0)
    dimension: Optional[int] = Field(None, gt=0)

    # gradient check
    grad_points: Optional[int] = Field(None, gt=0)
    deep_grad_points: Optional[int] = Field(None, gt=0)
    spot_coordinates: Optional[int] = Field(None, gt=0)

    output_dir: Optional[Path] = None
    workers: Optional[int] = Field(None, gt=0)

    @field_validator("beta", mode="before")
    @classmethod
    def accept_infinite_beta(cls, value: Any) -> Any:
        if value is None:
            return None
        return coerce_beta(value)

    @field_validator("lam_ladder")
    @classmethod
    def _positive_ladder(cls, value: Optional[list[float]]) -> Optional[list[float]]:
        if value is not None and (not value or any(not lam > 0 for lam in value)):
            raise ValueError("lam_ladder must be a non-empty list of values > 0")
        return value

    @field_validator("ensemble_sizes")
    @classmethod
    def _positive_sizes(cls, value: Optional[list[int]]) -> Optional[list[int]]:
        if value is not None and (not value or any(n < 1 for n in value)):
            raise ValueError("ensemble_sizes must be a non-empty list of values >= 1")
        return value

    @model_validator(mode="after")
    def _check_against_dynamics(self) -> "ExperimentConfig":
        if self.beta is not None and not self.beta > 0:
            raise ValueError(f"beta must be > 0 or 'inf', got {self.beta!r}")
        if self.dynamics.is_gradient_descent and self.preset is not PresetName.CUSTOM:
            raise ValueError(
                f"preset {self.preset.value} runs evolution ensembles; "
                "gradient descent dynamics are only valid with preset=custom"
            )
        if self.preset in ANALYSIS_PRESETS and self.dynamics is not DynamicsKind.MC:
            raise ValueError(f"preset {self.preset.value} analyses Monte Carlo steps; dynamics must be mc")
        if self.dynamics.is_gradient_descent:
            for name in ("beta", "lam", "lam_ladder"):
                if getattr(self, name) is not None:
                    raise ValueError(f"{name} has no meaning for dynamics={self.dynamics.value}")
        if self.beta is not None:
            if self.preset in BETA_INFINITE_PRESETS and not math.isinf(self.beta):
                raise ValueError(f"preset {self.preset.value} compares against clipped descent and needs beta=inf")
            if self.preset in BETA_FINITE_PRESETS and math.isinf(self.beta):
                raise ValueError(f"preset {self.preset.value} needs a finite beta")
        return self

    @property
    def beta_infinite(self) -> bool:
        return self.beta is None or math.isinf(self.beta)


class RunManifest(BaseModel):
    """Everything needed to rerun an experiment; `config` is fully resolved."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    config: dict[str, Any]
    version: str
    master_seed: int
    init_seed: Optional[int] = None
    started_at: datetime
    duration_s: float
    files: list[str]
    python_version: str
    numpy_version: str
    checks_passed: Optional[bool] = None


class PlotSpec(BaseModel):
    """One SVG from one CSV: x column, y columns, optional row filter."""

    model_config = ConfigDict(extra="forbid")

    x: str = "t"
    y: list[str] = Field(..., min_length=1)
    where: dict[str, float] = Field(default_factory=dict)
    log_y: bool = False
    title: Optional[str] = None
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    output: Path
