import numpy as np
import pytest
from numpy.testing import assert_array_equal
from scipy.spatial.distance import pdist

from services.dft_oracle import ComplexGrid
from services.errors import ConfigurationError, FormatError, InfeasibleError, ShapeError
from services.sampling import (
    apply_mask,
    cartesian_mask,
    load_mask,
    make_mask,
    mask_from_bytes,
    mask_to_bytes,
    poisson_mask,
    save_mask,
)

PATTERNS = [("cartesian", 2.0), ("poisson", 4.0), ("vdp", 7.0)]


@pytest.mark.parametrize("pattern, af", PATTERNS)
def test_fraction_within_tolerance_64(pattern, af):
    mask = make_mask(pattern, 64, 64, af, seed=11)
    assert mask.grid.dtype == bool
    assert abs(mask.achieved_fraction - 1 / af) <= 0.1 / af


@pytest.mark.slow
@pytest.mark.parametrize("pattern, af", PATTERNS)
def test_fraction_within_tolerance_128(pattern, af):
    mask = make_mask(pattern, 128, 128, af, seed=11)
    assert abs(mask.achieved_fraction - 1 / af) <= 0.1 / af


def test_cartesian_keeps_full_rows_and_center():
    mask = cartesian_mask(50, 20, 4.0, seed=3)
    rows = mask.grid.any(axis=1)
    assert_array_equal(mask.grid[rows], np.ones((rows.sum(), 20), dtype=bool))
    assert rows.sum() == round(50 / 4)
    # центральные 8% строк: 4 строки вокруг N//2
    assert rows[23:27].all()


def _cells_outside_center(mask):
    grid = mask.grid.copy()
    n, m = grid.shape
    grid[n // 2 - 2 : n // 2 + 2, m // 2 - 2 : m // 2 + 2] = False
    return np.argwhere(grid).astype(np.float64)


@pytest.mark.parametrize("seed", [0, 2, 5])
def test_poisson_grid_respects_radius(seed):
    mask = poisson_mask(48, 48, 4.0, seed=seed)
    assert mask.radius > 0
    # попарные расстояния по сохраняемой сетке, центральный блок не считается
    assert pdist(_cells_outside_center(mask)).min() >= mask.radius
    assert pdist(mask.points).min() >= mask.radius
    rows, cols = mask.points.astype(int).T
    assert mask.grid[rows, cols].all()


def test_poisson_radius_holds_on_saved_file(tmp_path):
    mask = poisson_mask(40, 32, 3.0, seed=1)
    loaded = load_mask(save_mask(mask, tmp_path / "p.dmsk"))
    assert pdist(_cells_outside_center(loaded)).min() >= mask.radius


def test_vdp_denser_at_center():
    n = 32
    rows, cols = np.meshgrid(np.arange(n) - n // 2, np.arange(n) - n // 2, indexing="ij")
    distance = np.hypot(rows, cols)
    d_max = distance.max()
    forced = np.zeros((n, n), dtype=bool)
    forced[n // 2 - 2 : n // 2 + 2, n // 2 - 2 : n // 2 + 2] = True
    inner = (distance <= d_max / 4) & ~forced
    outer = distance >= 3 * d_max / 4

    inner_density, outer_density = [], []
    for seed in range(10):
        grid = make_mask("vdp", n, n, 7.0, seed=seed).grid
        inner_density.append(grid[inner].mean())
        outer_density.append(grid[outer].mean())
    assert np.mean(inner_density) > np.mean(outer_density)


def test_center_block_always_sampled():
    mask = make_mask("vdp", 32, 32, 6.0, seed=5)
    assert mask.grid[14:18, 14:18].all()


@pytest.mark.parametrize("pattern, af", PATTERNS)
def test_same_seed_same_bytes(pattern, af):
    first = mask_to_bytes(make_mask(pattern, 32, 24, af, seed=9))
    assert first == mask_to_bytes(make_mask(pattern, 32, 24, af, seed=9))
    assert first != mask_to_bytes(make_mask(pattern, 32, 24, af, seed=10))


def test_af_one_samples_everything():
    assert make_mask("poisson", 16, 16, 1.0, seed=0).grid.all()
    assert cartesian_mask(16, 16, 1.0, seed=0).grid.all()


def test_af_guards():
    with pytest.raises(ConfigurationError):
        make_mask("poisson", 16, 16, 0.5, seed=0)
    with pytest.raises(InfeasibleError):
        cartesian_mask(16, 16, 17.0, seed=0)
    # 2 строки из 16 = 0.125, а 1/7 ± 10% = [0.1286, 0.1571]
    with pytest.raises(InfeasibleError):
        cartesian_mask(16, 16, 7.0, seed=0)
    with pytest.raises(ConfigurationError):
        make_mask("spiral", 16, 16, 2.0, seed=0)


def test_apply_mask_zeroes_unsampled_cells(rng):
    mask = cartesian_mask(8, 6, 2.0, seed=1)
    kspace = rng.standard_normal((3, 8, 6)) + 1j * rng.standard_normal((3, 8, 6))
    masked = apply_mask(kspace, mask)
    keep = mask.unshifted()
    assert_array_equal(masked[:, keep], kspace[:, keep])
    assert not masked[:, ~keep].any()

    grid = apply_mask(ComplexGrid.from_complex(kspace[0]), mask)
    assert isinstance(grid, ComplexGrid)
    with pytest.raises(ShapeError):
        apply_mask(kspace[:, :4], mask)


def test_mask_file_round_trip(tmp_path):
    mask = make_mask("vdp", 20, 12, 3.0, seed=4)
    loaded = load_mask(save_mask(mask, tmp_path / "mask.dmsk"))
    assert_array_equal(loaded.grid, mask.grid)
    assert (loaded.pattern, loaded.af, loaded.seed) == ("vdp", 3.0, 4)


def test_mask_file_errors_report_offsets():
    data = bytearray(mask_to_bytes(cartesian_mask(4, 4, 2.0, seed=0)))

    with pytest.raises(FormatError) as exc:
        mask_from_bytes(bytes(data[:10]))
    assert exc.value.offset == 10

    bad_magic = bytearray(data)
    bad_magic[0:4] = b"XXXX"
    with pytest.raises(FormatError) as exc:
        mask_from_bytes(bytes(bad_magic))
    assert exc.value.offset == 0

    bad_version = bytearray(data)
    bad_version[4] = 9
    with pytest.raises(FormatError) as exc:
        mask_from_bytes(bytes(bad_version))
    assert exc.value.offset == 4

    with pytest.raises(FormatError) as exc:
        mask_from_bytes(bytes(data[:-1]))
    assert exc.value.offset == len(data) - 1

    bad_cell = bytearray(data)
    bad_cell[26 + 5] = 7
    with pytest.raises(FormatError) as exc:
        mask_from_bytes(bytes(bad_cell))
    assert exc.value.offset == 31


@pytest.mark.parametrize("pattern, af", PATTERNS)
def test_apply_mask_is_idempotent_projection(pattern, af, rng):
    mask = make_mask(pattern, 32, 32, af, seed=3)
    kspace = ComplexGrid.from_complex(rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32)))
    once = apply_mask(kspace, mask)
    twice = apply_mask(once, mask)
    assert_array_equal(twice.re, once.re)
    assert_array_equal(twice.im, once.im)
    assert np.sum(np.abs(once.to_complex()) ** 2) <= np.sum(np.abs(kspace.to_complex()) ** 2)

    assert not np.any(apply_mask(kspace.to_complex(), mask)[~mask.unshifted()])
