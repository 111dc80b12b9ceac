from app.dynamics.descent import GDConfig, gd_step, gd_step_clipped, gd_step_plain
from app.dynamics.langevin import (
    langevin_step_finite,
    langevin_step_infinite,
    langevin_step_noniso,
)
from app.dynamics.mutation import (
    MutationConfig,
    StepOutcome,
    acceptance_probability,
    mc_step,
    metropolis_accept,
    metropolis_accept_many,
    propose_mutation,
    propose_mutations,
)

__all__ = [
    "GDConfig",
    "MutationConfig",
    "StepOutcome",
    "acceptance_probability",
    "gd_step",
    "gd_step_clipped",
    "gd_step_plain",
    "langevin_step_finite",
    "langevin_step_infinite",
    "langevin_step_noniso",
    "mc_step",
    "metropolis_accept",
    "metropolis_accept_many",
    "propose_mutation",
    "propose_mutations",
]
