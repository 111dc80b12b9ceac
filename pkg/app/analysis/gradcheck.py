# app/analysis/gradcheck.py

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from app.model.dataset import Dataset, make_dataset
from app.model.gradients import FD_STEP, fd_grad, relative_error
from app.model.networks import NetworkObjective
from app.schemas.architecture import NetworkArchitecture

logger = logging.getLogger(__name__)

DEFAULT_POINT_SCALE = 0.3


@dataclass
class GradCheckReport:
    architecture: str
    n_points: int
    coordinates_per_point: int
    max_rel_error: float
    per_point_max: np.ndarray


def grad_check_suite(
    arch: NetworkArchitecture,
    n_random_points: int,
    rng: np.random.Generator | None = None,
    data: Dataset | None = None,
    n_coordinates: int | None = None,
    scale: float = DEFAULT_POINT_SCALE,
    h: float = FD_STEP,
) -> GradCheckReport:
    """
    Worst relative error between the analytic gradient and central
    differences over random parameter vectors xᵢ ~ N(0, scale²).

    n_coordinates spot-checks that many random coordinates per point
    instead of all N.
    """
    if n_random_points < 1:
        raise ValueError("n_random_points must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    data = data if data is not None else make_dataset(1000)
    objective = NetworkObjective(arch, data)
    n = arch.n_params
    per_point = np.empty(n_random_points)
    for p in range(n_random_points):
        params = scale * rng.standard_normal(n)
        coords = None
        if n_coordinates is not None and n_coordinates < n:
            coords = np.sort(rng.choice(n, size=n_coordinates, replace=False))
        analytic = objective.gradient(params)
        numeric = fd_grad(params, arch, data, h=h, coordinates=coords)
        picked = np.arange(n) if coords is None else coords
        per_point[p] = float(np.max(relative_error(analytic[picked], numeric[picked])))

    report = GradCheckReport(
        architecture=arch.describe(),
        n_points=n_random_points,
        coordinates_per_point=n if n_coordinates is None else min(n, n_coordinates),
        max_rel_error=float(per_point.max()),
        per_point_max=per_point,
    )
    logger.info("Gradient check %s: max relative error %.3e", report.architecture, report.max_rel_error)
    return report
