from app.analysis.acceptance import acceptance_rate_limit, binomial_stderr
from app.analysis.gradcheck import GradCheckReport, grad_check_suite
from app.analysis.moments import MomentReport, drift_diffusion_closed_form, estimate_drift_diffusion
from app.analysis.stationarity import (
    StationarityReport,
    batch_means_se,
    stationary_check,
    suggested_sigma,
)
from app.analysis.toy_losses import LinearLoss, QuadraticLoss, ToyLoss, evaluate_rows

__all__ = [
    "GradCheckReport",
    "LinearLoss",
    "MomentReport",
    "QuadraticLoss",
    "StationarityReport",
    "ToyLoss",
    "acceptance_rate_limit",
    "batch_means_se",
    "binomial_stderr",
    "drift_diffusion_closed_form",
    "estimate_drift_diffusion",
    "evaluate_rows",
    "grad_check_suite",
    "stationary_check",
    "suggested_sigma",
]
