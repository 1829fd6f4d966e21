"""DT-слой: обучаемое полносвязное отображение вдоль одной оси как свёртка без паддинга.

Комплексная сетка хранится в 2-канальном вещественном виде. Выход слоя —
блочная раскладка каналов: 0..A−1 — вещественные части, A..2A−1 — мнимые.
Ядро (2A, 2, A, 1) задаёт для каждого выходного k умножение на комплексный
вес по всем A входам столбца.

Блок (два слоя) считает F_N · x · G^H, где G — матрица второго слоя, поэтому
для разделимого DFT второй слой инициализируется сопряжёнными весами
(`fourier_block_init`).

Публичный API:
    - DtLayerParams
    - fourier_init(), fourier_block_init(), identity_init(), random_init()
    - dt_forward(), conj_transpose(), dt_block() — чистые функции
    - dt_forward_graph(), conj_transpose_graph(), dt_block_graph() — то же на ленте
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from config import DT_FINAL_CONJ, VERIFY_DTYPE
from services.errors import ConfigurationError, ShapeError
from services.numerics import GradTape, Value

Direction = Literal["forward", "inverse"]


@dataclass
class DtLayerParams:
    """Веса одного DT-слоя: kernel (2A, 2, A, 1) и bias (2A,)."""

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        k = self.kernel
        if k.ndim != 4 or k.shape[1] != 2 or k.shape[3] != 1 or k.shape[0] != 2 * k.shape[2]:
            raise ShapeError(f"DT kernel должен иметь форму (2A, 2, A, 1), получено {k.shape}")
        if self.bias.shape != (k.shape[0],):
            raise ShapeError(f"DT bias формы {self.bias.shape}, ожидалось ({k.shape[0]},)")

    @property
    def size(self) -> int:
        return self.kernel.shape[2]

    @property
    def param_count(self) -> int:
        return int(self.kernel.size + self.bias.size)

    def astype(self, dtype) -> "DtLayerParams":
        return DtLayerParams(kernel=self.kernel.astype(dtype), bias=self.bias.astype(dtype))


def dt_layer_param_count(size: int) -> int:
    """2A·2·A весов + 2A смещений."""
    return 2 * size * 2 * size + 2 * size


# =============================================================================
# Инициализация
# =============================================================================


def _complex_weights_to_kernel(weights: np.ndarray, dtype) -> np.ndarray:
    """Комплексная матрица W (A×A) → ядро, реализующее out = W · column."""
    size = weights.shape[0]
    kernel = np.zeros((2 * size, 2, size, 1), dtype=np.float64)
    kernel[:size, 0, :, 0] = weights.real
    kernel[:size, 1, :, 0] = -weights.imag
    kernel[size:, 0, :, 0] = weights.imag
    kernel[size:, 1, :, 0] = weights.real
    return kernel.astype(dtype)


def fourier_init(
    size: int,
    direction: Direction = "forward",
    *,
    conjugate: bool = False,
    dtype=VERIFY_DTYPE,
) -> DtLayerParams:
    """Ядро DFT вдоль оси длины `size`.

    forward: kernel[k,0,n,0] = cos θ, kernel[k,1,n,0] = sin θ,
             kernel[A+k,0,n,0] = −sin θ, kernel[A+k,1,n,0] = cos θ, θ = 2π·nk/A.
    inverse: знак θ меняется, все веса делятся на A.
    conjugate: ещё раз меняет знак θ (веса второго слоя блока).
    """
    if size < 1:
        raise ConfigurationError(f"Длина оси DT-слоя должна быть ≥ 1, получено {size}")
    if direction not in ("forward", "inverse"):
        raise ConfigurationError(f"Неизвестное направление: {direction}")
    sign = -1.0 if direction == "forward" else 1.0
    if conjugate:
        sign = -sign
    idx = np.arange(size)
    theta = 2 * np.pi * (np.outer(idx, idx) % size) / size
    weights = np.exp(sign * 1j * theta)
    if direction == "inverse":
        weights = weights / size
    return DtLayerParams(kernel=_complex_weights_to_kernel(weights, dtype), bias=np.zeros(2 * size, dtype=dtype))


def fourier_block_init(
    rows: int, cols: int, direction: Direction = "forward", *, dtype=VERIFY_DTYPE
) -> tuple[DtLayerParams, DtLayerParams]:
    """Пара слоёв, при которой dt_block(final_conj=True) совпадает с DFT (или обратным)."""
    return (
        fourier_init(rows, direction, dtype=dtype),
        fourier_init(cols, direction, conjugate=True, dtype=dtype),
    )


def identity_init(size: int, *, dtype=VERIFY_DTYPE) -> DtLayerParams:
    if size < 1:
        raise ConfigurationError(f"Длина оси DT-слоя должна быть ≥ 1, получено {size}")
    return DtLayerParams(
        kernel=_complex_weights_to_kernel(np.eye(size, dtype=np.complex128), dtype),
        bias=np.zeros(2 * size, dtype=dtype),
    )


def random_init(size: int, rng: np.random.Generator, *, dtype=VERIFY_DTYPE) -> DtLayerParams:
    """Равномерно в ±sqrt(1/(2A)), bias = 0."""
    limit = np.sqrt(1.0 / (2 * size))
    kernel = rng.uniform(-limit, limit, size=(2 * size, 2, size, 1))
    return DtLayerParams(kernel=kernel.astype(dtype), bias=np.zeros(2 * size, dtype=dtype))


# =============================================================================
# Перестановки осей
# =============================================================================


def _check_block_layout(shape: tuple[int, ...]) -> int:
    if len(shape) != 4 or shape[2] != 1:
        raise ShapeError(f"Ожидался тензор (B, 2A, 1, W), получено {shape}")
    if shape[1] % 2:
        raise ShapeError(f"Число каналов (axis 1 = {shape[1]}) должно быть чётным")
    return shape[1] // 2


def _block_to_grid(x: np.ndarray, conjugate: bool) -> np.ndarray:
    half = _check_block_layout(x.shape)
    re = x[:, :half, 0, :].transpose(0, 2, 1)
    im = x[:, half:, 0, :].transpose(0, 2, 1)
    return np.ascontiguousarray(np.stack([re, -im if conjugate else im], axis=1))


def _grid_to_block(g: np.ndarray, conjugate: bool) -> np.ndarray:
    """Сопряжённое (и одновременно обратное) к _block_to_grid."""
    batch, _, width, half = g.shape
    out = np.empty((batch, 2 * half, 1, width), dtype=g.dtype)
    out[:, :half, 0, :] = g[:, 0].transpose(0, 2, 1)
    out[:, half:, 0, :] = -g[:, 1].transpose(0, 2, 1) if conjugate else g[:, 1].transpose(0, 2, 1)
    return out


def conj_transpose(x: np.ndarray) -> np.ndarray:
    """(B, 2A, 1, W) в блочной раскладке → (B, 2, W, A): сопряжённо-транспонированная сетка."""
    return _block_to_grid(np.asarray(x), conjugate=True)


def grid_as_block(x: np.ndarray) -> np.ndarray:
    """Переинтерпретация (B, 2, H, W) как (B, 2H, 1, W) (тот же буфер)."""
    if x.ndim != 4 or x.shape[1] != 2:
        raise ShapeError(f"Ожидался тензор (B, 2, H, W), получено {x.shape}")
    return x.reshape(x.shape[0], 2 * x.shape[2], 1, x.shape[3])


def conj_transpose_graph(tape: GradTape, x: Value, *, conjugate: bool = True) -> Value:
    _check_block_layout(x.shape)
    return tape.linear_map(
        x,
        lambda data: _block_to_grid(data, conjugate),
        lambda grad: _grid_to_block(grad, conjugate),
        op="conj_transpose" if conjugate else "transpose",
    )


# =============================================================================
# Прямой проход
# =============================================================================


def dt_forward_graph(tape: GradTape, x: Value, kernel: Value, bias: Value) -> Value:
    size = kernel.shape[2]
    if x.data.ndim != 4 or x.shape[1] != 2:
        raise ShapeError(f"dt_forward: вход должен быть (B, 2, A, W), получено {x.shape}")
    if x.shape[2] != size:
        raise ShapeError(f"dt_forward: высота входа (axis 2 = {x.shape[2]}) != A ядра ({size})")
    return tape.conv2d_valid(x, kernel, bias)


def dt_block_graph(
    tape: GradTape,
    x: Value,
    rows: tuple[Value, Value],
    cols: tuple[Value, Value],
    *,
    final_conj: bool = DT_FINAL_CONJ,
) -> Value:
    """rows-слой → conj_transpose → cols-слой → conj_transpose (или транспонирование)."""
    if x.data.ndim != 4 or x.shape[1] != 2:
        raise ShapeError(f"dt_block: вход должен быть (B, 2, N, M), получено {x.shape}")
    n, m = x.shape[2], x.shape[3]
    if rows[0].shape[2] != n or cols[0].shape[2] != m:
        raise ShapeError(
            f"dt_block: слои ({rows[0].shape[2]}, {cols[0].shape[2]}) не совпадают с осями сетки ({n}, {m})"
        )
    h = dt_forward_graph(tape, x, *rows)
    h = conj_transpose_graph(tape, h)
    h = dt_forward_graph(tape, h, *cols)
    return conj_transpose_graph(tape, h, conjugate=final_conj)


def dt_forward(x: np.ndarray, params: DtLayerParams) -> np.ndarray:
    tape = GradTape(enabled=False)
    return dt_forward_graph(tape, tape.leaf(x), tape.leaf(params.kernel), tape.leaf(params.bias)).data


def dt_block(
    x: np.ndarray,
    p_rows: DtLayerParams,
    p_cols: DtLayerParams,
    *,
    final_conj: bool = DT_FINAL_CONJ,
) -> np.ndarray:
    tape = GradTape(enabled=False)
    out = dt_block_graph(
        tape,
        tape.leaf(x),
        (tape.leaf(p_rows.kernel), tape.leaf(p_rows.bias)),
        (tape.leaf(p_cols.kernel), tape.leaf(p_cols.bias)),
        final_conj=final_conj,
    )
    return out.data
