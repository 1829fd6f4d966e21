"""Маски undersampling: Cartesian, Poisson-disc и variable-density Poisson.

Маска хранится в сдвинутых координатах (DC в центре сетки: строка N//2,
столбец M//2). Перед применением к k-space (DC в (0, 0)) маска разворачивается
`ifftshift` — см. `SamplingMask.unshifted()`.

Poisson/VDP строятся метанием дротиков: ячейки обходятся в случайном
(по seed) порядке, кандидат отбрасывается, если ближе r к уже принятой ячейке.
Радиус подбирается бисекцией, пока доля не попадёт в 1/af ± 10%; если доля
перескакивает окно, упаковка обрезается в порядке метания.
Центральный блок 4×4 включается всегда (поверх дротиков).

Публичный API:
    - SamplingMask
    - cartesian_mask(), poisson_mask(), vdp_mask(), make_mask()
    - apply_mask()
    - save_mask(), load_mask()
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from config import (
    CARTESIAN_CENTER_FRACTION,
    MASK_FILE_MAGIC,
    MASK_FILE_VERSION,
    MASK_FRACTION_TOLERANCE,
    POISSON_CENTER_BLOCK,
    POISSON_MAX_BISECTION_ITERATIONS,
    VDP_RADIUS_SLOPE,
    logger,
)
from services.dft_oracle import ComplexGrid
from services.errors import ConfigurationError, ConvergenceError, FormatError, InfeasibleError, ShapeError
from utils.rng import make_rng

MaskPattern = Literal["cartesian", "poisson", "vdp"]

PATTERN_CODES: dict[str, int] = {"cartesian": 0, "poisson": 1, "vdp": 2}
PATTERN_NAMES: dict[int, str] = {code: name for name, code in PATTERN_CODES.items()}

# magic, version, pattern, af, seed, N, M
_HEADER = struct.Struct("<4sBBfQII")


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Бинарная маска N×M (сдвинутые координаты) с метаданными генерации."""

    grid: np.ndarray
    pattern: MaskPattern
    af: float
    seed: int
    # координаты принятых дротиков (строка, столбец) и итоговый радиус; только для Poisson/VDP
    points: np.ndarray | None = None
    radius: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def achieved_fraction(self) -> float:
        return float(np.count_nonzero(self.grid)) / self.grid.size

    def unshifted(self) -> np.ndarray:
        """Маска в координатах k-space с DC в (0, 0)."""
        return np.fft.ifftshift(self.grid)

    def within_tolerance(self, tolerance: float = MASK_FRACTION_TOLERANCE) -> bool:
        target = 1.0 / self.af
        return abs(self.achieved_fraction - target) <= tolerance * target


def _check_af(af: float) -> None:
    if not np.isfinite(af) or af < 1:
        raise ConfigurationError(f"Коэффициент ускорения должен быть ≥ 1, получено af={af}")


def _check_dims(n: int, m: int) -> None:
    if n < 1 or m < 1:
        raise ConfigurationError(f"Размеры маски должны быть ≥ 1, получено {n}x{m}")


# =============================================================================
# Cartesian
# =============================================================================


def cartesian_mask(n: int, m: int, af: float, seed: int) -> SamplingMask:
    """Полные строки (phase-encode): центральные 8% всегда, остальные — без возвращения до round(N/af)."""
    _check_dims(n, m)
    _check_af(af)
    if af > n:
        raise InfeasibleError(f"Cartesian: af={af} > N={n}, нельзя взять меньше одной строки")

    target = min(n, max(1, int(round(n / af))))
    n_center = min(target, int(round(CARTESIAN_CENTER_FRACTION * n)))
    start = n // 2 - n_center // 2
    center_rows = np.arange(start, start + n_center)

    rng = make_rng(seed, "mask")
    others = np.setdiff1d(np.arange(n), center_rows)
    chosen = rng.choice(others, size=target - n_center, replace=False)

    grid = np.zeros((n, m), dtype=bool)
    grid[center_rows, :] = True
    grid[chosen, :] = True

    mask = SamplingMask(grid=grid, pattern="cartesian", af=float(af), seed=int(seed))
    if not mask.within_tolerance():
        # шаг доли — целая строка: 1/N
        raise InfeasibleError(
            f"Cartesian {n}x{m} af={af}: {target} строк дают долю {mask.achieved_fraction:.4f}, "
            f"вне 1/af ± {MASK_FRACTION_TOLERANCE:.0%}"
        )
    logger.debug("Cartesian %dx%d af=%.2f: %d строк (центр %d)", n, m, af, target, n_center)
    return mask


# =============================================================================
# Poisson-disc
# =============================================================================


def _center_block(n: int, m: int) -> np.ndarray:
    block = np.zeros((n, m), dtype=bool)
    size_n, size_m = min(POISSON_CENTER_BLOCK, n), min(POISSON_CENTER_BLOCK, m)
    r0, c0 = n // 2 - size_n // 2, m // 2 - size_m // 2
    block[r0 : r0 + size_n, c0 : c0 + size_m] = True
    return block


def _throw_darts(positions: np.ndarray, order: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Последовательное метание по ячейкам сетки.

    Кандидат принимается, если нет принятого дротика ближе его радиуса.
    Возвращает плоские индексы принятых ячеек в порядке принятия.
    """
    n, m = radii.shape
    if not np.any(radii > 0):
        return order.astype(np.int64)

    accepted = np.zeros((n, m), dtype=bool)
    taken: list[int] = []
    reach = int(np.ceil(float(radii.max())))
    for flat in order:
        i, j = divmod(int(flat), m)
        i0, i1 = max(0, i - reach), min(n, i + reach + 1)
        j0, j1 = max(0, j - reach), min(m, j + reach + 1)
        window = accepted[i0:i1, j0:j1]
        if window.any():
            delta = positions[i0:i1, j0:j1][window] - positions[i, j]
            if np.any(np.einsum("ij,ij->i", delta, delta) < radii[i, j] ** 2):
                continue
        accepted[i, j] = True
        taken.append(int(flat))
    return np.asarray(taken, dtype=np.int64)


def _radial_distance(n: int, m: int) -> tuple[np.ndarray, float]:
    rows = np.arange(n)[:, None] - n // 2
    cols = np.arange(m)[None, :] - m // 2
    distance = np.sqrt(rows.astype(np.float64) ** 2 + cols.astype(np.float64) ** 2)
    return distance, float(max(distance.max(), 1.0))


def _darts_grid(center: np.ndarray, darts: np.ndarray) -> np.ndarray:
    grid = center.copy()
    grid.flat[darts] = True
    return grid


def _truncate_darts(center: np.ndarray, darts: np.ndarray, target_count: int) -> np.ndarray:
    """Первые дротики в порядке метания, пока маска не наберёт target_count ячеек."""
    base = int(np.count_nonzero(center))
    if target_count <= base:
        return darts[:0]
    counts = base + np.cumsum(~center.flat[darts])
    keep = int(np.searchsorted(counts, target_count, side="left")) + 1
    return darts[:keep]


def _tune_radius(
    n: int,
    m: int,
    af: float,
    pattern: str,
    throw: Callable[[float], np.ndarray],
) -> tuple[np.ndarray, float]:
    """Бисекция по радиусу: возвращает (дротики, r) с долей в пределах допуска.

    Расстояния между ячейками дискретны, поэтому доля плотной упаковки меняется
    скачками и может перепрыгнуть окно допуска. Тогда берётся упаковка при
    наибольшем r с долей выше цели и обрезается в порядке метания до цели:
    подмножество дротиков сохраняет минимальное расстояние r.
    """
    target = 1.0 / af
    tolerance = MASK_FRACTION_TOLERANCE * target
    center = _center_block(n, m)
    lo, hi = 0.0, float(max(n, m))
    best_fraction = -1.0
    # (дротики, r) при наибольшем r, где доля выше цели; lo только растёт
    overshoot: tuple[np.ndarray, float] | None = None

    for iteration in range(1, POISSON_MAX_BISECTION_ITERATIONS + 1):
        radius = 0.5 * (lo + hi)
        darts = throw(radius)
        fraction = float(np.count_nonzero(_darts_grid(center, darts))) / (n * m)
        if best_fraction < 0 or abs(fraction - target) < abs(best_fraction - target):
            best_fraction = fraction
        logger.debug("%s: итерация %d, r=%.5f, доля=%.4f (цель %.4f)", pattern, iteration, radius, fraction, target)

        if abs(fraction - target) <= tolerance:
            return darts, radius
        if fraction > target:
            lo = radius
            overshoot = (darts, radius)
        else:
            hi = radius

    if overshoot is not None:
        darts, radius = overshoot
        darts = _truncate_darts(center, darts, int(round(n * m * target)))
        fraction = float(np.count_nonzero(_darts_grid(center, darts))) / (n * m)
        if abs(fraction - target) <= tolerance:
            logger.debug("%s: упаковка при r=%.5f обрезана до %d дротиков", pattern, radius, darts.size)
            return darts, radius
        if abs(fraction - target) < abs(best_fraction - target):
            best_fraction = fraction

    raise ConvergenceError(
        f"{pattern}: подбор радиуса не сошёлся за {POISSON_MAX_BISECTION_ITERATIONS} итераций "
        f"(цель {target:.4f}, лучшая доля {best_fraction:.4f})",
        best_fraction=best_fraction,
    )


def _disc_mask(n: int, m: int, af: float, seed: int, pattern: MaskPattern) -> SamplingMask:
    _check_dims(n, m)
    _check_af(af)
    start_time = time.perf_counter()

    rng = make_rng(seed, "mask")
    order = rng.permutation(n * m)
    grid_rows, grid_cols = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(m, dtype=np.float64), indexing="ij")
    positions = np.stack([grid_rows, grid_cols], axis=-1)

    if pattern == "vdp":
        distance, d_max = _radial_distance(n, m)
        growth = 1.0 + VDP_RADIUS_SLOPE * distance / d_max
    else:
        growth = np.ones((n, m), dtype=np.float64)

    if af == 1:
        darts, radius = order.astype(np.int64), 0.0
    else:
        darts, radius = _tune_radius(n, m, af, pattern, lambda r: _throw_darts(positions, order, r * growth))

    mask = SamplingMask(
        grid=_darts_grid(_center_block(n, m), darts),
        pattern=pattern,
        af=float(af),
        seed=int(seed),
        points=positions.reshape(-1, 2)[darts],
        radius=radius,
    )
    logger.info(
        "Маска %s %dx%d af=%.2f: доля %.4f, r=%.4f (%.2f сек)",
        pattern, n, m, af, mask.achieved_fraction, radius, time.perf_counter() - start_time,
    )
    return mask


def poisson_mask(n: int, m: int, af: float, seed: int) -> SamplingMask:
    """Равномерный Poisson-disc с постоянным радиусом r."""
    return _disc_mask(n, m, af, seed, "poisson")


def vdp_mask(n: int, m: int, af: float, seed: int) -> SamplingMask:
    """Poisson-disc с радиусом r(d) = r0·(1 + 2d/d_max), d — расстояние от центра сетки."""
    return _disc_mask(n, m, af, seed, "vdp")


_GENERATORS: dict[str, Callable[[int, int, float, int], SamplingMask]] = {
    "cartesian": cartesian_mask,
    "poisson": poisson_mask,
    "vdp": vdp_mask,
}


def make_mask(pattern: str, n: int, m: int, af: float, seed: int) -> SamplingMask:
    if pattern not in _GENERATORS:
        raise ConfigurationError(f"Неизвестный тип маски: {pattern} (доступны {sorted(_GENERATORS)})")
    return _GENERATORS[pattern](n, m, af, seed)


# =============================================================================
# Применение
# =============================================================================


def apply_mask(kspace: "ComplexGrid | np.ndarray", mask: SamplingMask) -> "ComplexGrid | np.ndarray":
    """Оставляет отсчёты под маской, остальные зануляет (k-space с DC в (0, 0)).

    Принимает ComplexGrid или массив с последними осями (N, M); тип сохраняется.
    """
    keep = mask.unshifted()
    if isinstance(kspace, ComplexGrid):
        if kspace.shape != keep.shape:
            raise ShapeError(f"apply_mask: сетка {kspace.shape} != маска {keep.shape}")
        return ComplexGrid(
            re=np.where(keep, kspace.re, np.zeros((), dtype=kspace.re.dtype)),
            im=np.where(keep, kspace.im, np.zeros((), dtype=kspace.im.dtype)),
        )
    kspace = np.asarray(kspace)
    if kspace.ndim < 2 or kspace.shape[-2:] != keep.shape:
        raise ShapeError(f"apply_mask: последние оси {kspace.shape[-2:]} != маска {keep.shape}")
    return np.where(keep, kspace, np.zeros((), dtype=kspace.dtype))


# =============================================================================
# Файл маски
# =============================================================================


def mask_to_bytes(mask: SamplingMask) -> bytes:
    n, m = mask.shape
    header = _HEADER.pack(
        MASK_FILE_MAGIC, MASK_FILE_VERSION, PATTERN_CODES[mask.pattern], float(mask.af), int(mask.seed), n, m
    )
    return header + mask.grid.astype(np.uint8).tobytes()


def mask_from_bytes(data: bytes) -> SamplingMask:
    if len(data) < _HEADER.size:
        raise FormatError(f"Файл маски короче заголовка ({_HEADER.size} байт)", offset=len(data))
    magic, version, pattern_code, af, seed, n, m = _HEADER.unpack_from(data, 0)
    if magic != MASK_FILE_MAGIC:
        raise FormatError(f"Неверная сигнатура маски: {magic!r}", offset=0)
    if version != MASK_FILE_VERSION:
        raise FormatError(f"Неподдерживаемая версия маски: {version}", offset=4)
    if pattern_code not in PATTERN_NAMES:
        raise FormatError(f"Неизвестный код шаблона: {pattern_code}", offset=5)
    if n == 0 or m == 0:
        raise FormatError(f"Пустая маска {n}x{m}", offset=18 if n == 0 else 22)

    expected = _HEADER.size + n * m
    if len(data) < expected:
        raise FormatError(f"Файл маски обрезан: ожидалось {expected} байт, получено {len(data)}", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"Лишние байты в конце файла маски ({len(data) - expected})", offset=expected)

    body = np.frombuffer(data, dtype=np.uint8, count=n * m, offset=_HEADER.size)
    bad = np.flatnonzero(body > 1)
    if bad.size:
        raise FormatError(f"Недопустимое значение ячейки маски: {int(body[bad[0]])}", offset=_HEADER.size + int(bad[0]))

    return SamplingMask(
        grid=body.reshape(n, m).astype(bool),
        pattern=PATTERN_NAMES[pattern_code],
        af=float(af),
        seed=int(seed),
    )


def save_mask(mask: SamplingMask, path: str | Path) -> Path:
    out_path = Path(path).expanduser().resolve()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(mask_to_bytes(mask))
    logger.info("Маска сохранена: %s (%s, af=%.2f, доля %.4f)", out_path, mask.pattern, mask.af, mask.achieved_fraction)
    return out_path


def load_mask(path: str | Path) -> SamplingMask:
    return mask_from_bytes(Path(path).expanduser().resolve().read_bytes())
