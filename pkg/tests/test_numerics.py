import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from config import GRAD_CHECK_TOLERANCE
from services.errors import ConfigurationError, ContractError, ShapeError
from services.numerics import (
    GradTape,
    backward,
    check_gradients,
    conv2d_same,
    conv2d_valid,
    flat_index,
    relative_error,
    relu,
)


def _naive_conv(x, kernel, bias):
    batch, _, height, width = x.shape
    c_out, _, k_h, k_w = kernel.shape
    out = np.zeros((batch, c_out, height - k_h + 1, width - k_w + 1))
    for b in range(batch):
        for o in range(c_out):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    out[b, o, i, j] = bias[o] + np.sum(kernel[o] * x[b, :, i : i + k_h, j : j + k_w])
    return out


# =============================================================================
# Тензоры и свёртки
# =============================================================================


def test_flat_index_row_major():
    assert flat_index((2, 3, 4, 5), 1, 2, 3, 4) == 119
    assert flat_index((2, 3, 4, 5), 0, 0, 0, 0) == 0
    with pytest.raises(ShapeError):
        flat_index((2, 3, 4, 5), 0, 3, 0, 0)


def test_conv2d_valid_matches_loops(rng):
    x = rng.standard_normal((2, 3, 6, 7))
    kernel = rng.standard_normal((4, 3, 3, 2))
    bias = rng.standard_normal(4)
    assert_allclose(conv2d_valid(x, kernel, bias), _naive_conv(x, kernel, bias), rtol=0, atol=1e-12)


def test_conv2d_valid_is_linear_in_input(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    y = rng.standard_normal((2, 3, 8, 8))
    kernel = rng.standard_normal((4, 3, 3, 3))
    bias = np.zeros(4)
    combined = conv2d_valid(1.5 * x - 0.7 * y, kernel, bias)
    assert_allclose(combined, 1.5 * conv2d_valid(x, kernel, bias) - 0.7 * conv2d_valid(y, kernel, bias), atol=1e-10)


def test_conv2d_valid_bitwise_independent_of_threads(rng):
    x = rng.standard_normal((5, 2, 9, 9)).astype(np.float32)
    kernel = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    bias = rng.standard_normal(3).astype(np.float32)
    assert_array_equal(conv2d_valid(x, kernel, bias, threads=1), conv2d_valid(x, kernel, bias, threads=4))


def test_conv2d_same_keeps_spatial_shape(rng):
    x = rng.standard_normal((1, 2, 7, 5))
    out = conv2d_same(x, rng.standard_normal((4, 2, 5, 5)), np.zeros(4))
    assert out.shape == (1, 4, 7, 5)


def test_conv2d_same_rejects_even_and_rectangular_kernels(rng):
    x = rng.standard_normal((1, 1, 6, 6))
    with pytest.raises(ConfigurationError):
        conv2d_same(x, np.ones((1, 1, 4, 4)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv2d_same(x, np.ones((1, 1, 3, 5)), np.zeros(1))


def test_conv2d_operand_checks(rng):
    x = rng.standard_normal((1, 2, 6, 6))
    with pytest.raises(ShapeError, match="axis 1"):
        conv2d_valid(x, np.ones((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv2d_valid(x, np.ones((1, 2, 7, 3)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv2d_valid(x, np.ones((2, 2, 3, 3)), np.zeros(3))
    with pytest.raises(ConfigurationError):
        conv2d_valid(x, np.ones((1, 2, 3, 3), dtype=np.float32), np.zeros(1, dtype=np.float32))


def test_relu_zero_maps_to_zero():
    x = np.array([-1.0, 0.0, 2.0])
    assert_array_equal(relu(x), [0.0, 0.0, 2.0])


# =============================================================================
# Лента и backward
# =============================================================================


def test_relu_subgradient_at_zero_is_zero():
    tape = GradTape()
    x = tape.leaf(np.array([[[[-1.0, 0.0, 3.0]]]]), name="x", trainable=True)
    grads = backward(tape, tape.sum(tape.relu(x)))
    assert_array_equal(grads["x"], [[[[0.0, 0.0, 1.0]]]])


def test_backward_contracts():
    tape = GradTape()
    x = tape.leaf(np.ones((1, 1, 2, 2)), name="x", trainable=True)
    with pytest.raises(ContractError):
        backward(tape, tape.relu(x))

    disabled = GradTape(enabled=False)
    y = disabled.leaf(np.ones(3), name="y", trainable=True)
    with pytest.raises(ContractError):
        backward(disabled, disabled.sum(y))


def test_trainable_leaf_needs_unique_name():
    tape = GradTape()
    with pytest.raises(ContractError):
        tape.leaf(np.ones(2), trainable=True)
    tape.leaf(np.ones(2), name="w", trainable=True)
    with pytest.raises(ContractError):
        tape.leaf(np.ones(2), name="w", trainable=True)


def test_unreached_trainable_leaf_gets_zero_grad():
    tape = GradTape()
    used = tape.leaf(np.full(3, 2.0), name="used", trainable=True)
    tape.leaf(np.ones((2, 2)), name="unused", trainable=True)
    grads = backward(tape, tape.sum(tape.scale(used, 3.0)))
    assert_array_equal(grads["used"], np.full(3, 3.0))
    assert_array_equal(grads["unused"], np.zeros((2, 2)))


def test_shared_input_accumulates_gradient():
    tape = GradTape()
    x = tape.leaf(np.array([1.0, -2.0]), name="x", trainable=True)
    grads = backward(tape, tape.sum(tape.add(x, x)))
    assert_array_equal(grads["x"], [2.0, 2.0])


def test_mse_gradient_closed_form(rng):
    pred = rng.standard_normal((2, 1, 3, 3))
    target = rng.standard_normal((2, 1, 3, 3))
    tape = GradTape()
    leaf = tape.leaf(pred, name="pred", trainable=True)
    loss = tape.mse(leaf, target)
    assert float(loss.data) == pytest.approx(np.mean((pred - target) ** 2))
    assert_allclose(backward(tape, loss)["pred"], 2 * (pred - target) / pred.size)


def test_disabled_tape_records_nothing(rng):
    tape = GradTape(enabled=False)
    x = tape.leaf(rng.standard_normal((1, 1, 4, 4)), name="x", trainable=True)
    tape.relu(x)
    assert tape._records == []
    assert tape.activation_signature()


# =============================================================================
# Проверка градиентов
# =============================================================================


def test_relative_error_uses_scale_floor():
    assert relative_error(np.array([0.0]), np.array([1e-10])) == pytest.approx(1e-2)
    assert relative_error(np.array([1.0]), np.array([1.0 + 1e-6]), scale=10.0) == pytest.approx(1e-7)


def test_conv_relu_mse_gradients_match_central_differences(rng):
    arrays = {
        "x": rng.standard_normal((2, 2, 6, 6)),
        "k1": rng.standard_normal((3, 2, 3, 3)) * 0.5,
        "b1": rng.standard_normal(3) * 0.1,
        "k2": rng.standard_normal((1, 3, 3, 3)) * 0.5,
        "b2": np.zeros(1),
    }
    target = rng.standard_normal((2, 1, 6, 6))

    def build_loss(tape, leaves):
        h = tape.relu(tape.conv2d_same(leaves["x"], leaves["k1"], leaves["b1"]))
        out = tape.conv2d_same(h, leaves["k2"], leaves["b2"])
        return tape.mse(out, target)

    results = check_gradients(build_loss, arrays, samples_per_tensor=12)
    for name, result in results.items():
        assert result.checked >= result.sampled / 2, name
        assert result.max_relative_error < GRAD_CHECK_TOLERANCE, (name, result)


def test_dense_tanh_gradients(rng):
    arrays = {
        "x": rng.standard_normal((3, 8)),
        "w": rng.standard_normal((4, 8)) * 0.3,
        "b": rng.standard_normal(4) * 0.1,
    }

    def build_loss(tape, leaves):
        h = tape.tanh(tape.dense(leaves["x"], leaves["w"], leaves["b"]))
        return tape.add(tape.sum(tape.scale(h, 0.5)), tape.mean_abs(h))

    for name, result in check_gradients(build_loss, arrays).items():
        assert result.max_relative_error < GRAD_CHECK_TOLERANCE, (name, result)


def test_dense_shape_checks():
    tape = GradTape()
    x = tape.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        tape.dense(x, tape.leaf(np.ones((4, 5))), tape.leaf(np.ones(4)))
    with pytest.raises(ShapeError):
        tape.reshape(x, (4, 2))
