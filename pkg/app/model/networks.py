# app/model/networks.py

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.model.dataset import Dataset
from app.schemas.architecture import NetworkArchitecture

DEFAULT_INIT_SCALE = 1e-2  # σ₀, i.e. σ₀² = 1e-4


def init_params(
    arch: NetworkArchitecture,
    sigma0: float = DEFAULT_INIT_SCALE,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """
    Draw every parameter independently from N(0, σ₀²).
    """
    if sigma0 < 0:
        raise ValueError(f"sigma0 must be >= 0, got {sigma0}")
    rng = rng if rng is not None else np.random.default_rng()
    return sigma0 * rng.standard_normal(arch.n_params)


def _check_length(params: np.ndarray, arch: NetworkArchitecture) -> None:
    if params.shape != (arch.n_params,):
        raise ValueError(
            f"parameter vector has shape {params.shape}; {arch.describe()} needs ({arch.n_params},)"
        )


def _as_output(theta, values: np.ndarray):
    return float(values[0]) if np.ndim(theta) == 0 else values


# ----------------------------------------------------------------------
# Shallow net: f(θ) = Σ_i x_{3i+1} tanh(x_{3i+2} θ + x_{3i+3})  (1-based)
# ----------------------------------------------------------------------

def _shallow_hidden(params: np.ndarray, theta: np.ndarray):
    out_w, in_w, bias = params[0::3], params[1::3], params[2::3]
    hidden = np.tanh(np.outer(theta, in_w) + bias)  # (K, M)
    return out_w, in_w, hidden


def forward_shallow(params: np.ndarray, theta):
    """
    Output of the single-hidden-layer net at θ (scalar or array).
    """
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    out_w, _, hidden = _shallow_hidden(params, theta_arr)
    return _as_output(theta, hidden @ out_w)


def _shallow_loss_and_grad(params: np.ndarray, data: Dataset) -> tuple[float, np.ndarray]:
    out_w, _, hidden = _shallow_hidden(params, data.points)
    residual = hidden @ out_w - data.targets
    k = data.k
    value = float(residual @ residual) / k

    scaled = (2.0 / k) * residual                      # dU/df at each θ_j
    sech2 = 1.0 - hidden * hidden
    grad = np.empty_like(params)
    grad[0::3] = hidden.T @ scaled                     # i mod 3 = 1
    grad[1::3] = out_w * (sech2.T @ (scaled * data.points))  # i mod 3 = 2
    grad[2::3] = out_w * (sech2.T @ scaled)            # i mod 3 = 0
    return value, grad


# ----------------------------------------------------------------------
# Deep net: layer-major layout, each layer = weights (fan_out x fan_in,
# row-major) followed by fan_out biases; linear output with one bias.
# ----------------------------------------------------------------------

def unpack_deep(params: np.ndarray, arch: NetworkArchitecture) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Split a flat deep-net vector into (weights, biases) views, input to output.
    """
    layers = []
    offset = 0
    for fan_out, fan_in in arch.layer_shapes():
        n_w = fan_out * fan_in
        weights = params[offset:offset + n_w].reshape(fan_out, fan_in)
        offset += n_w
        biases = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((weights, biases))
    return layers


def _deep_activations(params: np.ndarray, arch: NetworkArchitecture, theta: np.ndarray):
    layers = unpack_deep(params, arch)
    activations = [theta[:, None]]  # (K, 1)
    for weights, biases in layers[:-1]:
        activations.append(np.tanh(activations[-1] @ weights.T + biases))
    out_w, out_b = layers[-1]
    output = (activations[-1] @ out_w.T + out_b)[:, 0]
    return layers, activations, output


def forward_deep(params: np.ndarray, arch: NetworkArchitecture, theta):
    """
    Fully-connected tanh net, linear output, evaluated at θ (scalar or array).
    """
    _check_length(params, arch)
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    _, _, output = _deep_activations(params, arch, theta_arr)
    return _as_output(theta, output)


def _deep_loss_and_grad(
    params: np.ndarray, arch: NetworkArchitecture, data: Dataset
) -> tuple[float, np.ndarray]:
    layers, activations, output = _deep_activations(params, arch, data.points)
    residual = output - data.targets
    k = data.k
    value = float(residual @ residual) / k

    # Reverse-mode accumulation; delta holds dU/d(pre-activation) per point.
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    delta = ((2.0 / k) * residual)[:, None]  # (K, 1) at the linear output
    for index in range(len(layers) - 1, -1, -1):
        weights, _ = layers[index]
        below = activations[index]
        grads.append(((delta.T @ below).ravel(), delta.sum(axis=0)))
        if index > 0:
            delta = (delta @ weights) * (1.0 - below * below)

    grad = np.empty_like(params)
    offset = 0
    for grad_w, grad_b in reversed(grads):
        grad[offset:offset + grad_w.size] = grad_w
        offset += grad_w.size
        grad[offset:offset + grad_b.size] = grad_b
        offset += grad_b.size
    return value, grad


# ----------------------------------------------------------------------
# Loss and gradients
# ----------------------------------------------------------------------

def forward(params: np.ndarray, arch: NetworkArchitecture, theta):
    if arch.is_shallow:
        _check_length(params, arch)
        return forward_shallow(params, theta)
    return forward_deep(params, arch, theta)


def loss(params: np.ndarray, arch: NetworkArchitecture, data: Dataset) -> float:
    """
    U(x) = (1/K) Σ_j [f_x(j/K) − f₀(j/K)]².
    """
    residual = np.asarray(forward(params, arch, data.points)) - data.targets
    return float(residual @ residual) / data.k


def grad_shallow(params: np.ndarray, arch: NetworkArchitecture, data: Dataset) -> np.ndarray:
    if not arch.is_shallow:
        raise ValueError(f"grad_shallow needs a shallow architecture, got {arch.describe()}")
    _check_length(params, arch)
    return _shallow_loss_and_grad(params, data)[1]


def grad_deep(params: np.ndarray, arch: NetworkArchitecture, data: Dataset) -> np.ndarray:
    if arch.is_shallow:
        raise ValueError(f"grad_deep needs a deep architecture, got {arch.describe()}")
    _check_length(params, arch)
    return _deep_loss_and_grad(params, arch, data)[1]


@dataclass(frozen=True)
class NetworkObjective:
    """
    Supervised loss of one architecture on one dataset.

    Calling the object returns U(x); `gradient` and `loss_and_grad` return
    the exact analytic gradient. Instances are picklable, so they travel to
    ensemble worker processes unchanged.
    """

    arch: NetworkArchitecture
    data: Dataset

    @property
    def n_params(self) -> int:
        return self.arch.n_params

    def __call__(self, params: np.ndarray) -> float:
        return loss(params, self.arch, self.data)

    def loss_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        _check_length(params, self.arch)
        if self.arch.is_shallow:
            return _shallow_loss_and_grad(params, self.data)
        return _deep_loss_and_grad(params, self.arch, self.data)

    def gradient(self, params: np.ndarray) -> np.ndarray:
        return self.loss_and_grad(params)[1]
