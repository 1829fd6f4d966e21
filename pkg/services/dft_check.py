"""Набор проверок точности: DT-блок с Фурье-инициализацией против эталонного DFT.

Публичный API:
    - run_dft_check() — прогон по всем парам (N, M) из config.DFT_CHECK_SIZES
"""

from __future__ import annotations

import time

import numpy as np
from pydantic import BaseModel, Field

from config import DFT_CHECK_SIZES, DFT_CHECK_TOLERANCE, logger
from services.dft_oracle import dft2_naive, embed, idft2, right_factor_check, unembed
from services.dt_layer import dt_block, fourier_block_init
from utils.rng import make_rng


class DftCheckEntry(BaseModel):
    n: int = Field(..., description="Строки сетки")
    m: int = Field(..., description="Столбцы сетки")
    forward_error: float = Field(..., description="max |dt_block(x) − dft2(x)|")
    inverse_error: float = Field(..., description="max |dt_block_inv(y) − idft2(y)|")


class DftCheckResult(BaseModel):
    entries: list[DftCheckEntry] = Field(default_factory=list)
    max_error: float = Field(0.0, description="Максимум по всем ошибкам")
    tolerance: float = Field(DFT_CHECK_TOLERANCE, description="Порог")
    right_factor: str = Field("", description="Какой правый множитель замыкает разделимую форму")
    right_factor_errors: dict[str, float] = Field(default_factory=dict)
    passed: bool = Field(False, description="max_error < tolerance")


def _random_grid(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def run_dft_check(*, max_size: int | None = None, seed: int = 0) -> DftCheckResult:
    """Сравнивает DT-блок (float64) с dft2_naive/idft2 на всех сетках N×M до max_size."""
    sizes = [s for s in DFT_CHECK_SIZES if max_size is None or s <= max_size]
    rng = make_rng(seed, "dft-check")
    start_time = time.perf_counter()
    logger.info("dft-check: размеры %s", sizes)

    result = DftCheckResult()
    for n in sizes:
        for m in sizes:
            x = _random_grid(rng, n, m)
            y = _random_grid(rng, n, m)

            rows, cols = fourier_block_init(n, m, "forward")
            forward = unembed(dt_block(embed(x), rows, cols, final_conj=True))[0]
            rows_inv, cols_inv = fourier_block_init(n, m, "inverse")
            inverse = unembed(dt_block(embed(y), rows_inv, cols_inv, final_conj=True))[0]

            entry = DftCheckEntry(
                n=n,
                m=m,
                forward_error=float(np.max(np.abs(forward - dft2_naive(x).to_complex()))),
                inverse_error=float(np.max(np.abs(inverse - idft2(y).to_complex()))),
            )
            logger.debug("dft-check %dx%d: forward=%.3e inverse=%.3e", n, m, entry.forward_error, entry.inverse_error)
            result.entries.append(entry)

    result.max_error = max((max(e.forward_error, e.inverse_error) for e in result.entries), default=0.0)

    factor = right_factor_check(_random_grid(rng, 4, 4))
    result.right_factor = factor.closing_form
    result.right_factor_errors = {"transpose": factor.transpose_error, "hermitian": factor.hermitian_error}
    result.passed = result.max_error < result.tolerance

    logger.info(
        "dft-check завершён: %d сеток, max error=%.3e, правый множитель=%s (%.2f сек)",
        len(result.entries),
        result.max_error,
        result.right_factor,
        time.perf_counter() - start_time,
    )
    return result
