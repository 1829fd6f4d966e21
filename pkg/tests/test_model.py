import numpy as np
import pytest
from numpy.testing import assert_allclose

from config import GRAD_CHECK_TOLERANCE
from services.dft_oracle import dft2_fast, embed
from services.dt_layer import dt_layer_param_count
from services.errors import ConfigurationError, ResourceError, ShapeError
from services.model import (
    ModelSpec,
    autoencoder_param_count,
    automap_param_count,
    automap_tiny_forward,
    automap_tiny_param_count,
    build_forward,
    dautomap_forward,
    dautomap_param_count,
    forward,
    init_params,
    linear_diagnostic_params,
)
from services.numerics import check_gradients


# =============================================================================
# Счётчики параметров
# =============================================================================


def test_autoencoder_count():
    assert autoencoder_param_count() == 108865


def test_dautomap_counts():
    assert dautomap_param_count(128, 128) == 372033
    assert dautomap_param_count(256, 256) == 1159489


def test_automap_counts_match_published_scale():
    assert automap_param_count(128) == 805448001
    assert automap_param_count(256) == 12885141825
    assert automap_param_count(128) == pytest.approx(806e6, rel=0.01)
    assert automap_param_count(256) == pytest.approx(1.29e10, rel=0.01)


def test_growth_is_linear_vs_quadratic():
    # при 128→256 константа автоэнкодера ещё заметна, поэтому берём 256→512
    dautomap_ratio = dautomap_param_count(512, 512) / dautomap_param_count(256, 256)
    assert 3.5 <= dautomap_ratio <= 4.5

    dt_only = [dautomap_param_count(s, s) - autoencoder_param_count() for s in (128, 256)]
    assert dt_only[1] / dt_only[0] == pytest.approx(4.0, rel=0.01)

    automap_ratio = automap_param_count(256) / automap_param_count(128)
    assert 15 <= automap_ratio <= 17


def test_live_count_matches_analytic():
    params = init_params(ModelSpec(n=16, m=8), seed=0)
    assert params.param_count() == dautomap_param_count(16, 8)
    assert params.param_count() == 2 * dt_layer_param_count(16) + 2 * dt_layer_param_count(8) + 108865

    tiny = init_params(ModelSpec(kind="automap", n=8, m=8), seed=0)
    assert tiny.param_count() == automap_tiny_param_count(8) == automap_param_count(8) - 1600


def test_automap_spec_guards():
    with pytest.raises(ResourceError):
        ModelSpec(kind="automap", n=64, m=64)
    with pytest.raises(ValueError):
        ModelSpec(kind="automap", n=8, m=6)


# =============================================================================
# Прямой проход
# =============================================================================


def test_forward_shape_and_dtype(rng):
    params = init_params(ModelSpec(n=8, m=12), seed=1)
    kspace = rng.standard_normal((3, 2, 8, 12)).astype(np.float32)
    out = dautomap_forward(kspace, params, threads=2)
    assert out.shape == (3, 1, 8, 12)
    assert out.dtype == np.float32


def test_init_is_deterministic():
    a = init_params(ModelSpec(n=8, m=8), seed=7)
    b = init_params(ModelSpec(n=8, m=8), seed=7)
    for name in a.names:
        assert np.array_equal(a.tensors[name], b.tensors[name]), name


def test_forward_input_checks(rng):
    params = init_params(ModelSpec(n=8, m=8), seed=1)
    with pytest.raises(ShapeError):
        forward(rng.standard_normal((1, 2, 8, 6)).astype(np.float32), params)
    with pytest.raises(ConfigurationError):
        forward(rng.standard_normal((1, 2, 8, 8)), params)
    with pytest.raises(ConfigurationError):
        automap_tiny_forward(rng.standard_normal((1, 2, 8, 8)).astype(np.float32), params)


def test_automap_tiny_forward_shape(rng):
    params = init_params(ModelSpec(kind="automap", n=6, m=6), seed=2)
    out = automap_tiny_forward(rng.standard_normal((2, 2, 6, 6)).astype(np.float32), params)
    assert out.shape == (2, 1, 6, 6)


def test_linear_diagnostic_model_reconstructs_image(rng):
    images = rng.uniform(0, 1, size=(2, 8, 6))
    kspace = embed(dft2_fast(images))
    out = forward(kspace, linear_diagnostic_params(8, 6))
    assert_allclose(out[:, 0], images, atol=1e-10)


def test_full_network_gradients(rng):
    params = init_params(ModelSpec(n=8, m=8), seed=4, dtype="float64")
    kspace = rng.standard_normal((2, 2, 8, 8))
    target = rng.uniform(0, 1, size=(2, 1, 8, 8))

    def build_loss(tape, leaves):
        result = build_forward(tape, params, kspace, leaves=leaves)
        return tape.mse(result.output, target)

    results = check_gradients(build_loss, params.tensors, samples_per_tensor=6)
    assert set(results) == set(params.names)
    for name, result in results.items():
        assert result.max_relative_error < GRAD_CHECK_TOLERANCE, (name, result)
