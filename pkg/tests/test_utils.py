import logging

import numpy as np
from numpy.testing import assert_array_equal
from PIL import Image

from utils.image_io import error_map, save_pgm, to_uint8
from utils.logging_utils import setup_console_logging
from utils.rng import make_rng, spawn_rngs


def test_to_uint8_clips_and_rounds():
    assert_array_equal(to_uint8(np.array([-0.5, 0.0, 0.5, 1.0, 2.0])), [0, 0, 128, 255, 255])
    assert not to_uint8(np.ones(3), scale=0.0).any()


def test_error_map_scaled_by_peak():
    pixels, peak = error_map(np.array([[0.0, 0.1], [0.3, 0.4]]), np.zeros((2, 2)))
    assert peak == 0.4
    assert pixels.max() == 255
    assert pixels[0, 0] == 0


def test_save_pgm_writes_binary_p5(tmp_path):
    pixels = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = save_pgm(pixels, tmp_path / "out" / "img.pgm")
    assert path.read_bytes().startswith(b"P5")
    assert_array_equal(np.asarray(Image.open(path)), pixels)


def test_named_streams_are_independent():
    a = make_rng(0, "mask").random(4)
    assert_array_equal(a, make_rng(0, "mask").random(4))
    assert not np.array_equal(a, make_rng(0, "data").random(4))
    assert not np.array_equal(a, make_rng(1, "mask").random(4))
    assert_array_equal(make_rng(0, "custom").random(2), make_rng(0, "custom").random(2))


def test_spawned_generators_differ():
    first, second = spawn_rngs(3, "data", 2)
    assert not np.array_equal(first.random(4), second.random(4))
    assert_array_equal(spawn_rngs(3, "data", 2)[1].random(4), spawn_rngs(3, "data", 5)[1].random(4))


def test_noisy_library_loggers_are_quieted():
    setup_console_logging(level=logging.DEBUG, fmt="%(message)s")
    assert logging.getLogger("PIL").level == logging.WARNING
