from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.model.dataset import Dataset, make_dataset
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
from app.schemas.architecture import NetworkArchitecture


# ----------------------------------------------------------------------
# Architecture and data
# ----------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 10, 30, 256])
def test_shallow_parameter_count(m: int) -> None:
    assert NetworkArchitecture.shallow(m).n_params == 3 * m


def test_deep_parameter_count_matches_closed_form() -> None:
    assert NetworkArchitecture.deep(8, 32).n_params == 7489
    for layers, width in [(1, 4), (2, 3), (4, 16)]:
        expected = (width + width) + (layers - 1) * (width * width + width) + (width + 1)
        assert NetworkArchitecture.deep(layers, width).n_params == expected


def test_architecture_rejects_mixed_fields() -> None:
    with pytest.raises(ValidationError, match="hidden_nodes"):
        NetworkArchitecture(kind="shallow")
    with pytest.raises(ValidationError, match="layers/width"):
        NetworkArchitecture(kind="shallow", hidden_nodes=3, width=4)
    with pytest.raises(ValidationError, match="layers and width"):
        NetworkArchitecture(kind="deep", layers=2)


def test_dataset_points_are_exact_grid() -> None:
    data = make_dataset(7)
    assert data.k == 7
    assert np.array_equal(data.points, np.arange(7) / 7)
    assert data.points.min() == 0.0 and data.points.max() < 1.0
    assert np.all(np.abs(data.targets) <= 1.0)


def test_dataset_rejects_empty_and_mismatched() -> None:
    with pytest.raises(ValueError, match="positive integer"):
        make_dataset(0)
    with pytest.raises(ValueError, match="equal length"):
        Dataset(points=np.zeros(3), targets=np.zeros(2))


# ----------------------------------------------------------------------
# init_params / forward passes
# ----------------------------------------------------------------------

def test_init_params_lengths_and_scale(rng: np.random.Generator) -> None:
    shallow = init_params(NetworkArchitecture.shallow(30), 1e-2, rng)
    assert shallow.shape == (90,)
    assert np.all(np.isfinite(shallow))
    assert np.abs(shallow).max() < 0.1

    deep = init_params(NetworkArchitecture.deep(8, 32), 1e-2, rng)
    assert deep.shape == (7489,)
    assert np.std(deep) == pytest.approx(1e-2, rel=0.05)


def test_init_params_zero_variance_gives_zeros(rng: np.random.Generator) -> None:
    params = init_params(NetworkArchitecture.deep(2, 3), 0.0, rng)
    assert np.all(params == 0.0)


def test_forward_shallow_examples() -> None:
    assert forward_shallow(np.zeros(9), 0.3) == 0.0

    c = 0.7
    for theta in (0.0, 0.25, 0.9):
        assert forward_shallow(np.array([1.0, 0.0, c]), theta) == pytest.approx(math.tanh(c), abs=1e-15)

    x = np.array([0.3, -1.2, 0.4, -0.8, 2.0, -0.1])
    theta = 0.25
    expected = x[0] * math.tanh(theta * x[1] + x[2]) + x[3] * math.tanh(theta * x[4] + x[5])
    assert forward_shallow(x, theta) == pytest.approx(expected, abs=1e-15)


def test_forward_shallow_vectorized_matches_scalar(rng: np.random.Generator) -> None:
    params = rng.normal(size=15)
    thetas = np.linspace(0.0, 0.9, 5)
    values = forward_shallow(params, thetas)
    assert values.shape == (5,)
    for theta, value in zip(thetas, values):
        assert value == pytest.approx(forward_shallow(params, float(theta)), abs=1e-14)


def test_forward_shallow_odd_in_output_weights(rng: np.random.Generator) -> None:
    params = rng.normal(size=30)
    flipped = params.copy()
    flipped[0::3] *= -1.0
    thetas = make_dataset(20).points
    assert np.allclose(forward_shallow(flipped, thetas), -forward_shallow(params, thetas), atol=1e-15)


def test_forward_deep_zero_params() -> None:
    arch = NetworkArchitecture.deep(3, 5)
    assert forward_deep(np.zeros(arch.n_params), arch, 0.4) == 0.0


def test_single_layer_deep_net_reproduces_shallow(rng: np.random.Generator) -> None:
    m = 6
    shallow = rng.normal(size=3 * m)
    out_w, in_w, bias = shallow[0::3], shallow[1::3], shallow[2::3]
    arch = NetworkArchitecture.deep(1, m)
    # layer-major: input weights (W x 1), biases, output weights (1 x W), output bias
    deep = np.concatenate([in_w, bias, out_w, [0.0]])
    thetas = make_dataset(25).points
    assert np.allclose(forward_deep(deep, arch, thetas), forward_shallow(shallow, thetas), atol=1e-14)


def _reference_deep_forward(params: np.ndarray, arch: NetworkArchitecture, theta: float) -> float:
    """Nested-loop forward pass over the documented layer-major layout."""
    offset = 0
    activations = [theta]
    shapes = arch.layer_shapes()
    for index, (fan_out, fan_in) in enumerate(shapes):
        weights = params[offset:offset + fan_out * fan_in]
        offset += fan_out * fan_in
        biases = params[offset:offset + fan_out]
        offset += fan_out
        nxt = []
        for o in range(fan_out):
            total = biases[o]
            for i in range(fan_in):
                total += weights[o * fan_in + i] * activations[i]
            nxt.append(total if index == len(shapes) - 1 else math.tanh(total))
        activations = nxt
    return activations[0]


def test_forward_deep_matches_nested_loop_reference(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.deep(3, 4)
    params = rng.normal(scale=0.5, size=arch.n_params)
    assert forward_deep(params, arch, 0.5) == pytest.approx(_reference_deep_forward(params, arch, 0.5), abs=1e-13)


def test_unpack_deep_views_cover_every_parameter() -> None:
    arch = NetworkArchitecture.deep(2, 3)
    params = np.arange(arch.n_params, dtype=np.float64)
    layers = unpack_deep(params, arch)
    assert [w.shape for w, _ in layers] == [(3, 1), (3, 3), (1, 3)]
    flat = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in layers])
    assert np.array_equal(flat, params)


def test_forward_rejects_wrong_length() -> None:
    with pytest.raises(ValueError, match="needs"):
        forward(np.zeros(5), NetworkArchitecture.shallow(2), 0.1)


# ----------------------------------------------------------------------
# Loss
# ----------------------------------------------------------------------

def test_zero_params_loss_is_half_for_full_period() -> None:
    data = make_dataset(1000)
    arch = NetworkArchitecture.shallow(30)
    assert loss(np.zeros(arch.n_params), arch, data) == pytest.approx(0.5, abs=1e-12)


def test_loss_of_exact_fit_is_zero(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.shallow(4)
    params = rng.normal(size=arch.n_params)
    points = make_dataset(15).points
    data = Dataset(points=points, targets=np.asarray(forward(params, arch, points)))
    assert loss(params, arch, data) == 0.0
    assert np.all(grad_shallow(params, arch, data) == 0.0)


def test_loss_is_nonnegative(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.deep(2, 3)
    data = make_dataset(12)
    for _ in range(5):
        assert loss(rng.normal(size=arch.n_params), arch, data) >= 0.0


# ----------------------------------------------------------------------
# Gradients
# ----------------------------------------------------------------------

def test_shallow_gradient_hand_expanded_single_point() -> None:
    a, b, c = 0.7, -1.3, 0.2
    theta, target = 0.3, 0.2
    data = Dataset(points=np.array([theta]), targets=np.array([target]))
    h = math.tanh(b * theta + c)
    r = a * h - target
    sech2 = 1.0 - h * h
    expected = np.array([2 * r * h, 2 * r * a * sech2 * theta, 2 * r * a * sech2])
    got = grad_shallow(np.array([a, b, c]), NetworkArchitecture.shallow(1), data)
    assert np.allclose(got, expected, rtol=1e-12, atol=1e-15)


def test_shallow_gradient_matches_finite_differences(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.shallow(30)
    data = make_dataset(100)
    for _ in range(5):
        params = rng.normal(scale=0.3, size=arch.n_params)
        err = relative_error(grad_shallow(params, arch, data), fd_grad(params, arch, data))
        assert err.max() < 1e-5


def test_deep_gradient_matches_finite_differences_small_net(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.deep(2, 3)
    data = make_dataset(5)
    for _ in range(5):
        params = rng.normal(scale=0.5, size=arch.n_params)
        err = relative_error(grad_deep(params, arch, data), fd_grad(params, arch, data))
        assert err.max() < 1e-5


def test_deep_gradient_spot_check_large_net(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.deep(8, 32)
    data = make_dataset(100)
    params = rng.normal(scale=0.3, size=arch.n_params)
    coords = np.sort(rng.choice(arch.n_params, size=20, replace=False))
    numeric = fd_grad(params, arch, data, coordinates=coords)
    assert np.all(np.isnan(np.delete(numeric, coords)))
    err = relative_error(grad_deep(params, arch, data)[coords], numeric[coords])
    assert err.max() < 1e-5


def test_zero_residual_deep_gradients_vanish(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.deep(2, 3)
    params = rng.normal(scale=0.5, size=arch.n_params)
    points = make_dataset(8).points
    data = Dataset(points=points, targets=np.asarray(forward(params, arch, points)))
    assert np.all(grad_deep(params, arch, data) == 0.0)
    assert np.allclose(fd_grad(params, arch, data, h=1e-7), 0.0, atol=1e-12)


def test_gradient_functions_reject_wrong_architecture() -> None:
    data = make_dataset(3)
    deep = NetworkArchitecture.deep(1, 2)
    shallow = NetworkArchitecture.shallow(2)
    with pytest.raises(ValueError, match="shallow architecture"):
        grad_shallow(np.zeros(deep.n_params), deep, data)
    with pytest.raises(ValueError, match="deep architecture"):
        grad_deep(np.zeros(shallow.n_params), shallow, data)


def test_central_difference_exact_on_quadratic(rng: np.random.Generator) -> None:
    x = rng.normal(size=6)
    grad = central_difference(lambda v: 0.5 * float(v @ v), x)
    assert np.allclose(grad, x, atol=1e-8)
    with pytest.raises(ValueError, match="step"):
        central_difference(lambda v: 0.0, x, h=0.0)


def test_network_objective_agrees_with_functions(rng: np.random.Generator) -> None:
    arch = NetworkArchitecture.deep(2, 4)
    data = make_dataset(9)
    objective = NetworkObjective(arch, data)
    params = rng.normal(size=arch.n_params)
    value, grad = objective.loss_and_grad(params)
    assert value == pytest.approx(loss(params, arch, data), rel=1e-13)
    assert np.array_equal(grad, grad_deep(params, arch, data))
    assert objective.n_params == arch.n_params
