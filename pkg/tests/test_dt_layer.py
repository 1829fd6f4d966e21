import numpy as np
import pytest
from numpy.testing import assert_allclose

from config import GRAD_CHECK_TOLERANCE
from services.dft_check import run_dft_check
from services.dft_oracle import dft2_naive, dft_matrix, embed, idft2, unembed
from services.dt_layer import (
    DtLayerParams,
    conj_transpose,
    dt_block,
    dt_block_graph,
    dt_forward,
    dt_layer_param_count,
    fourier_block_init,
    fourier_init,
    grid_as_block,
    identity_init,
    random_init,
)
from services.errors import ShapeError
from services.numerics import check_gradients


def _random_complex(rng, n, m):
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def test_fourier_kernel_layout():
    size = 4
    kernel = fourier_init(size, "forward").kernel
    theta = 2 * np.pi * np.outer(np.arange(size), np.arange(size)) / size
    assert_allclose(kernel[:size, 0, :, 0], np.cos(theta), atol=1e-12)
    assert_allclose(kernel[:size, 1, :, 0], np.sin(theta), atol=1e-12)
    assert_allclose(kernel[size:, 0, :, 0], -np.sin(theta), atol=1e-12)
    assert_allclose(kernel[size:, 1, :, 0], np.cos(theta), atol=1e-12)


def test_dt_forward_applies_matrix_along_columns(rng):
    x = _random_complex(rng, 6, 3)
    out = dt_forward(embed(x), fourier_init(6, "forward"))
    assert out.shape == (1, 12, 1, 3)
    result = out[0, :6, 0, :] + 1j * out[0, 6:, 0, :]
    assert_allclose(result, dft_matrix(6) @ x, atol=1e-12)


@pytest.mark.parametrize("n, m", [(2, 2), (4, 8), (8, 4), (5, 7), (16, 16)])
def test_fourier_block_is_exact_dft(n, m, rng):
    x = _random_complex(rng, n, m)
    rows, cols = fourier_block_init(n, m, "forward")
    assert_allclose(unembed(dt_block(embed(x), rows, cols))[0], dft2_naive(x).to_complex(), atol=1e-10)

    rows_inv, cols_inv = fourier_block_init(n, m, "inverse")
    assert_allclose(unembed(dt_block(embed(x), rows_inv, cols_inv))[0], idft2(x).to_complex(), atol=1e-12)


def test_inverse_block_undoes_forward_block(rng):
    x = embed(_random_complex(rng, 8, 6))
    forward = dt_block(x, *fourier_block_init(8, 6, "forward"))
    assert_allclose(dt_block(forward, *fourier_block_init(8, 6, "inverse")), x, atol=1e-12)


def test_plain_final_transpose_gives_conjugate(rng):
    x = _random_complex(rng, 4, 6)
    out = dt_block(embed(x), *fourier_block_init(4, 6, "forward"), final_conj=False)
    assert out.shape == (1, 2, 4, 6)
    assert_allclose(unembed(out)[0], np.conj(dft2_naive(x).to_complex()), atol=1e-10)


def test_identity_block_passes_input_through(rng):
    x = embed(_random_complex(rng, 5, 3))
    assert_allclose(dt_block(x, identity_init(5), identity_init(3)), x, atol=1e-12)


def test_shape_errors(rng):
    with pytest.raises(ShapeError):
        dt_forward(embed(_random_complex(rng, 5, 4)), fourier_init(4))
    with pytest.raises(ShapeError):
        DtLayerParams(kernel=np.zeros((6, 2, 4, 1)), bias=np.zeros(6))
    with pytest.raises(ShapeError):
        DtLayerParams(kernel=np.zeros((8, 2, 4, 1)), bias=np.zeros(4))


def test_random_init_bounds():
    params = random_init(32, np.random.default_rng(0))
    assert np.abs(params.kernel).max() <= np.sqrt(1 / 64)
    assert not params.bias.any()
    assert params.param_count == dt_layer_param_count(32) == 4 * 32 * 32 + 64


def test_dt_block_gradients(rng):
    n, m = 4, 3
    arrays = {
        "x": embed(_random_complex(rng, n, m)).repeat(2, axis=0),
        "rows.kernel": random_init(n, rng).kernel,
        "rows.bias": rng.standard_normal(2 * n) * 0.1,
        "cols.kernel": random_init(m, rng).kernel,
        "cols.bias": rng.standard_normal(2 * m) * 0.1,
    }
    target = rng.standard_normal((2, 2, n, m))

    def build_loss(tape, leaves):
        out = dt_block_graph(
            tape,
            leaves["x"],
            (leaves["rows.kernel"], leaves["rows.bias"]),
            (leaves["cols.kernel"], leaves["cols.bias"]),
        )
        return tape.mse(out, target)

    for name, result in check_gradients(build_loss, arrays, samples_per_tensor=10).items():
        assert result.checked == result.sampled
        assert result.max_relative_error < GRAD_CHECK_TOLERANCE, (name, result)


def test_dft_check_suite_passes_at_all_sizes():
    result = run_dft_check()
    assert len(result.entries) == 36
    assert result.max_error < 1e-8
    assert result.passed
    assert result.right_factor == "transpose"


# =============================================================================
# Сопряжённое транспонирование
# =============================================================================


def _block_input(rng, batch=2, half=3, width=5):
    return rng.standard_normal((batch, 2 * half, 1, width))


def test_conj_transpose_matches_elementwise_loop(rng):
    x = _block_input(rng)
    batch, channels, _, width = x.shape
    half = channels // 2
    expected = np.empty((batch, 2, width, half))
    for b in range(batch):
        for a in range(half):
            for w in range(width):
                value = complex(x[b, a, 0, w], x[b, half + a, 0, w])
                expected[b, 0, w, a] = value.conjugate().real
                expected[b, 1, w, a] = value.conjugate().imag
    out = conj_transpose(x)
    assert out.shape == (batch, 2, width, half)
    np.testing.assert_array_equal(out, expected)


def test_conj_transpose_of_real_input_is_plain_transpose(rng):
    x = _block_input(rng)
    x[:, 3:] = 0.0
    out = conj_transpose(x)
    np.testing.assert_array_equal(out[:, 0], x[:, :3, 0, :].transpose(0, 2, 1))
    assert not out[:, 1].any()


def test_conj_transpose_is_involution_and_keeps_norm(rng):
    x = _block_input(rng)
    once = conj_transpose(x)
    twice = conj_transpose(grid_as_block(once))
    np.testing.assert_array_equal(twice, x.reshape(2, 2, 3, 5))
    assert np.sum(once**2) == pytest.approx(np.sum(x**2), rel=1e-14)


def test_conj_transpose_rejects_odd_channels(rng):
    with pytest.raises(ShapeError):
        conj_transpose(rng.standard_normal((1, 3, 1, 4)))
