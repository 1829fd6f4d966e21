"""Эталонные дискретные преобразования Фурье.

Оракулы намеренно медленные (O(N²M²) и O(N³)): по ним проверяется DT-слой,
поэтому важна прозрачность, а не скорость. Быстрые `dft2_fast`/`idft2_fast`
(numpy FFT) используются только в пайплайне данных.

Соглашения:
- F_N[k, n] = exp(−j·2π·nk/N), суммы по n = 0..N−1.
- Нормировка 1/(N·M) целиком в обратном преобразовании.
- Векторизация row-major: p = k·M + l, q = n·M + m.
- Правый множитель разделимой формы: F_M^T (проверяется через произведение Кронекера).
- Оракулы возвращают ComplexGrid; kron_apply — вектор vec(y) длины N·M.

Публичный API:
    - ComplexGrid — два вещественных плана (re, im) и переходы в/из Tensor4
    - dft_matrix(), dft2_naive(), dft2_separable(), kron_apply(), idft2()
    - dft2_fast(), idft2_fast()
    - right_factor_check() — какой из F^T / F^H замыкает разделимую форму
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from config import KRON_MAX_ELEMENTS
from services.errors import ResourceError, ShapeError


# =============================================================================
# Комплексная сетка
# =============================================================================


@dataclass(frozen=True)
class ComplexGrid:
    """Комплексная сетка N×M как два непрерывных вещественных плана."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self) -> None:
        if self.re.ndim != 2 or self.re.shape != self.im.shape:
            raise ShapeError(f"ComplexGrid: планы re {self.re.shape} и im {self.im.shape} должны быть 2-мерными и совпадать")

    @property
    def shape(self) -> tuple[int, int]:
        return self.re.shape

    @classmethod
    def from_complex(cls, z: np.ndarray, dtype=np.float64) -> "ComplexGrid":
        z = np.asarray(z)
        return cls(re=np.ascontiguousarray(z.real, dtype=dtype), im=np.ascontiguousarray(z.imag, dtype=dtype))

    @classmethod
    def from_tensor4(cls, t: np.ndarray, index: int = 0) -> "ComplexGrid":
        """Срез (1, 2, N, M): канал 0 — вещественная часть, канал 1 — мнимая."""
        if t.ndim != 4 or t.shape[1] != 2:
            raise ShapeError(f"ComplexGrid: ожидался тензор (B, 2, N, M), получено {t.shape}")
        return cls(re=np.ascontiguousarray(t[index, 0]), im=np.ascontiguousarray(t[index, 1]))

    def to_complex(self) -> np.ndarray:
        return self.re.astype(np.complex128) + 1j * self.im.astype(np.complex128)

    def to_tensor4(self) -> np.ndarray:
        return np.stack([self.re, self.im])[None]


def as_complex(x: "ComplexGrid | np.ndarray") -> np.ndarray:
    """Комплексный 2-мерный массив из сетки или массива."""
    if isinstance(x, ComplexGrid):
        return x.to_complex()
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeError(f"Ожидалась 2-мерная комплексная сетка, получено ndim={arr.ndim}")
    return arr


def embed(z: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Батч комплексных сеток (B, N, M) → тензор (B, 2, N, M)."""
    z = np.asarray(z)
    if z.ndim == 2:
        z = z[None]
    return np.ascontiguousarray(np.stack([z.real, z.imag], axis=1), dtype=dtype)


def unembed(t: np.ndarray) -> np.ndarray:
    """Тензор (B, 2, N, M) → комплексный массив (B, N, M)."""
    if t.ndim != 4 or t.shape[1] != 2:
        raise ShapeError(f"Ожидался тензор (B, 2, N, M), получено {t.shape}")
    return t[:, 0].astype(np.complex128) + 1j * t[:, 1].astype(np.complex128)


# =============================================================================
# Оракулы
# =============================================================================


def dft_matrix(size: int, *, inverse: bool = False) -> np.ndarray:
    """Матрица F[k, n] = exp(−j·2π·nk/size); inverse — сопряжённая, делённая на size.

    Фаза берётся от (n·k mod size), поэтому матрица симметрична побитово.
    """
    if size < 1:
        raise ShapeError(f"Размер DFT должен быть ≥ 1, получено {size}")
    idx = np.arange(size)
    theta = 2 * np.pi * (np.outer(idx, idx) % size) / size
    if inverse:
        return np.exp(1j * theta) / size
    return np.exp(-1j * theta)


def _phase_tables(n: int, m: int, sign: float) -> tuple[np.ndarray, np.ndarray]:
    rows = np.exp(sign * 2j * np.pi * (np.outer(np.arange(n), np.arange(n)) % n) / n)
    cols = np.exp(sign * 2j * np.pi * (np.outer(np.arange(m), np.arange(m)) % m) / m)
    return rows, cols


def _naive_transform(x: np.ndarray, sign: float) -> np.ndarray:
    n, m = x.shape
    rows, cols = _phase_tables(n, m, sign)
    y = np.empty((n, m), dtype=np.complex128)
    for k in range(n):
        for l in range(m):
            # прямая двойная сумма по (n, m) для каждого выхода
            y[k, l] = np.sum(x * np.outer(rows[k], cols[l]))
    return y


def dft2_naive(x: "ComplexGrid | np.ndarray") -> ComplexGrid:
    """y[k,l] = Σ_{n<N, m<M} x[n,m]·exp(−j2π(nk/N + ml/M))."""
    return ComplexGrid.from_complex(_naive_transform(as_complex(x), -1.0))


def idft2(y: "ComplexGrid | np.ndarray") -> ComplexGrid:
    """Обратное к dft2_naive с нормировкой 1/(N·M)."""
    y = as_complex(y)
    return ComplexGrid.from_complex(_naive_transform(y, 1.0) / y.size)


def dft2_separable(x: "ComplexGrid | np.ndarray") -> ComplexGrid:
    """F_N · x · F_M^T двумя матричными произведениями."""
    x = as_complex(x)
    n, m = x.shape
    return ComplexGrid.from_complex(dft_matrix(n) @ x @ dft_matrix(m).T)


def kron_apply(a: np.ndarray, b: np.ndarray, x: "ComplexGrid | np.ndarray") -> np.ndarray:
    """(A ⊗ B)·vec(x) с явной материализацией произведения Кронекера."""
    x = as_complex(x)
    n, m = x.shape
    if a.shape != (n, n) or b.shape != (m, m):
        raise ShapeError(f"kron_apply: A {a.shape} и B {b.shape} не согласованы с сеткой {x.shape}")
    if n * m > KRON_MAX_ELEMENTS:
        raise ResourceError(
            f"kron_apply: N·M = {n * m} > {KRON_MAX_ELEMENTS}, матрица ({n * m})² не будет построена"
        )
    return np.kron(a, b) @ x.reshape(-1)


def dft2_fast(x: np.ndarray) -> np.ndarray:
    """Быстрое 2D DFT по двум последним осям (numpy FFT).

    В отличие от оракулов работает с батчем комплексных массивов (..., N, M)
    и возвращает массив: это путь данных, а не верификации.
    """
    return np.fft.fft2(x, axes=(-2, -1))


def idft2_fast(y: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(y, axes=(-2, -1))


# =============================================================================
# Разделимая форма: F^T или F^H
# =============================================================================


@dataclass(frozen=True)
class RightFactorCheck:
    """Ошибки двух вариантов правого множителя против произведения Кронекера."""

    transpose_error: float
    hermitian_error: float

    @property
    def closing_form(self) -> str:
        return "transpose" if self.transpose_error <= self.hermitian_error else "hermitian"


def right_factor_check(x: "ComplexGrid | np.ndarray") -> RightFactorCheck:
    """Сравнивает F_N·x·F_M^T и F_N·x·F_M^H с (F_N ⊗ F_M)·vec(x)."""
    x = as_complex(x)
    n, m = x.shape
    f_n, f_m = dft_matrix(n), dft_matrix(m)
    reference = kron_apply(f_n, f_m, x)
    with_transpose = (f_n @ x @ f_m.T).reshape(-1)
    with_hermitian = (f_n @ x @ f_m.conj().T).reshape(-1)
    return RightFactorCheck(
        transpose_error=float(np.max(np.abs(with_transpose - reference))),
        hermitian_error=float(np.max(np.abs(with_hermitian - reference))),
    )
