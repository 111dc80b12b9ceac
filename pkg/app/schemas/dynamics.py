from __future__ import annotations

import math
from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

_INFINITY_SPELLINGS = {"inf", "+inf", "infinity", "+infinity", "∞"}


def coerce_beta(value: Any) -> Any:
    """
    Accept the spellings JSON configs use for β=∞ (null, "inf", "Infinity").
    """
    if value is None:
        return math.inf
    if isinstance(value, str) and value.strip().lower() in _INFINITY_SPELLINGS:
        return math.inf
    return value


class DynamicsKind(str, Enum):
    MC = "mc"
    GD_PLAIN = "gd_plain"
    GD_CLIPPED = "gd_clipped"
    LANGEVIN = "langevin"

    @property
    def is_gradient_descent(self) -> bool:
        return self in (DynamicsKind.GD_PLAIN, DynamicsKind.GD_CLIPPED)


class TimeScaling(BaseModel):
    """
    Common clock of the two dynamics: t = α·t_gd = αλ·t_evolution.
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    alpha: float = Field(..., gt=0, description="Learning rate α.")
    lam: float = Field(..., ge=0, description="Step-size parameter λ.")
    beta: float = Field(math.inf, description="Reciprocal evolutionary temperature.")

    @field_validator("beta", mode="before")
    @classmethod
    def accept_infinite_beta(cls, value: Any) -> Any:
        return coerce_beta(value)

    @property
    def beta_infinite(self) -> bool:
        return math.isinf(self.beta)

    @property
    def mode(self) -> str:
        return "beta-infinite" if self.beta_infinite else "beta-finite"


class DynamicsConfig(BaseModel):
    """
    Which stepper a trajectory runs, and its parameters.

    - mc:          Metropolis neuroevolution (finite β or β=∞)
    - gd_plain:    x ← x − α∇U
    - gd_clipped:  x ← x − α∇U/|∇U|
    - langevin:    the small-mutation limit of mc (finite β or β=∞;
                   per-parameter σ at β=∞ gives the non-isotropic variant)

    σ is derived from (α, λ, β) unless `sigma` / `sigma_vec` is given, which
    only toy-loss experiments do.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="strings")

    kind: DynamicsKind
    alpha: float = Field(..., gt=0)
    lam: float = Field(1.0, ge=0)
    beta: float = Field(math.inf)
    sigma: Optional[float] = Field(None, gt=0)
    sigma_vec: Optional[tuple[float, ...]] = None
    grad_norm_floor: float = Field(1e-30, ge=0)

    @field_validator("beta", mode="before")
    @classmethod
    def accept_infinite_beta(cls, value: Any) -> Any:
        return coerce_beta(value)

    @model_validator(mode="after")
    def _check(self) -> "DynamicsConfig":
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0 or infinite, got {self.beta!r}")
        if self.kind.is_gradient_descent and (self.sigma is not None or self.sigma_vec is not None):
            raise ValueError("sigma/sigma_vec have no meaning for gradient descent")
        if self.sigma is not None and self.sigma_vec is not None:
            raise ValueError("give either sigma or sigma_vec, not both")
        if self.sigma_vec is not None and any(not s > 0 for s in self.sigma_vec):
            raise ValueError("every sigma_vec entry must be > 0")
        return self

    @property
    def beta_infinite(self) -> bool:
        return math.isinf(self.beta)

    @property
    def scaling(self) -> TimeScaling:
        return TimeScaling(alpha=self.alpha, lam=self.lam, beta=self.beta)
