from app.model.dataset import Dataset, make_dataset, sine_target
from app.model.gradients import central_difference, fd_grad, relative_error
from app.model.networks import (
    NetworkObjective,
    forward,
    forward_deep,
    forward_shallow,
    grad_deep,
    grad_shallow,
    init_params,
    loss,
    unpack_deep,
)

__all__ = [
    "Dataset",
    "NetworkObjective",
    "central_difference",
    "fd_grad",
    "forward",
    "forward_deep",
    "forward_shallow",
    "grad_deep",
    "grad_shallow",
    "init_params",
    "loss",
    "make_dataset",
    "relative_error",
    "sine_target",
    "unpack_deep",
]
