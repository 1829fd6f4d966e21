"""Синтетические фантомы, симуляция undersampled k-space и файл датасета.

Фантом — "кардиоподобное" изображение: фоновый эллипс (торс), 3–8 внутренних
эллипсов разной интенсивности, кольцо (миокард) с ярким пулом внутри и плавное
мультипликативное поле неоднородности. Затем сглаживание Гауссом (σ = 1 px)
и нормировка в [0, 1].

k-space: DC в (0, 0), как у оракулов. Если изображение больше маски, из
k-space вырезается центральная часть, а цель — модуль idft2 вырезанного
полного k-space.

Публичный API:
    - Dataset, Sample, TrainingArrays
    - gen_phantoms(), simulate_sample(), zero_filled(), build_training_arrays()
    - write_dataset(), read_dataset()
"""

from __future__ import annotations

import struct
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from config import (
    DATASET_FILE_MAGIC,
    DATASET_FILE_VERSION,
    KSPACE_SCALE,
    NUM_THREADS,
    PHANTOM_BIAS_AMPLITUDE,
    PHANTOM_MAX_INTERIOR_ELLIPSES,
    PHANTOM_MIN_INTERIOR_ELLIPSES,
    PHANTOM_SMOOTHING_SIGMA,
    TRAIN_DTYPE,
    logger,
)
from services.dft_oracle import dft2_fast, embed, idft2_fast, unembed
from services.errors import ConfigurationError, FormatError, ShapeError
from services.sampling import SamplingMask, apply_mask, make_mask
from utils.rng import spawn_rngs

# magic, version, count, N, M, dtype code, seed
_HEADER = struct.Struct("<4sBIIIBQ")
_DTYPE_CODES = {0: np.dtype("<f4")}


def _import_cv2():
    try:
        import cv2  # type: ignore

        return cv2
    except Exception as e:  # pragma: no cover
        raise RuntimeError("Нужен пакет `opencv-python` для сглаживания фантомов.") from e


# =============================================================================
# Модели данных
# =============================================================================


@dataclass(eq=False)
class Dataset:
    """Набор модульных изображений (count, N, M) в [0, 1] и seed генерации."""

    images: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        if self.images.ndim != 3:
            raise ShapeError(f"Dataset: ожидался массив (count, N, M), получено {self.images.shape}")
        if self.images.shape[0] < 1:
            raise ConfigurationError("Dataset: count должен быть ≥ 1")

    @property
    def count(self) -> int:
        return int(self.images.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.images.shape[1]), int(self.images.shape[2])


@dataclass(eq=False)
class Sample:
    """Пара для обучения: target (1, 1, N, M) и zero-filled k-space (1, 2, N, M)."""

    target: np.ndarray
    input: np.ndarray


@dataclass(eq=False)
class TrainingArrays:
    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return int(self.inputs.shape[0])


# =============================================================================
# Фантомы
# =============================================================================


def _ellipse(rows: np.ndarray, cols: np.ndarray, cy: float, cx: float, a: float, b: float, angle: float) -> np.ndarray:
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    dy, dx = rows - cy, cols - cx
    xr = cos_a * dx + sin_a * dy
    yr = -sin_a * dx + cos_a * dy
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def _phantom(n: int, m: int, rng: np.random.Generator, cv2) -> np.ndarray:
    rows = np.linspace(-1.0, 1.0, n)[:, None]
    cols = np.linspace(-1.0, 1.0, m)[None, :]
    image = np.zeros((n, m), dtype=np.float64)

    # торс
    image += 0.3 * _ellipse(
        rows, cols,
        rng.normal(0.0, 0.03), rng.normal(0.0, 0.03),
        rng.uniform(0.75, 0.92), rng.uniform(0.6, 0.85), rng.uniform(0.0, np.pi),
    )

    for _ in range(int(rng.integers(PHANTOM_MIN_INTERIOR_ELLIPSES, PHANTOM_MAX_INTERIOR_ELLIPSES + 1))):
        image += rng.uniform(-0.15, 0.4) * _ellipse(
            rows, cols,
            rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
            rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3), rng.uniform(0.0, np.pi),
        )

    # миокард: кольцо и пул крови внутри
    cy, cx = rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)
    outer = rng.uniform(0.2, 0.35)
    inner = outer - rng.uniform(0.05, 0.1)
    radius = np.sqrt((rows - cy) ** 2 + (cols - cx) ** 2)
    image = np.where(radius <= outer, rng.uniform(0.5, 0.8), image)
    image = np.where(radius <= inner, rng.uniform(0.8, 1.0), image)

    coeffs = rng.uniform(-1.0, 1.0, size=3)
    bias = 1.0 + PHANTOM_BIAS_AMPLITUDE * (coeffs[0] * rows + coeffs[1] * cols + coeffs[2] * rows * cols) / 3.0
    image = np.clip(image * bias, 0.0, None)

    image = cv2.GaussianBlur(
        image,
        ksize=(0, 0),
        sigmaX=PHANTOM_SMOOTHING_SIGMA,
        sigmaY=PHANTOM_SMOOTHING_SIGMA,
        borderType=cv2.BORDER_REFLECT,
    )
    image = cv2.normalize(image, None, 0.0, 1.0, cv2.NORM_MINMAX)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def gen_phantoms(count: int, n: int, m: int, seed: int, *, threads: int | None = None) -> Dataset:
    """Генерирует `count` фантомов N×M; у каждого изображения свой поток RNG от seed."""
    if count < 1:
        raise ConfigurationError(f"Число изображений должно быть ≥ 1, получено {count}")
    if n < 1 or m < 1:
        raise ConfigurationError(f"Размер изображения должен быть ≥ 1, получено {n}x{m}")

    cv2 = _import_cv2()
    workers = max(1, int(NUM_THREADS if threads is None else threads))
    rngs = spawn_rngs(seed, "data", count)
    start_time = time.perf_counter()
    logger.info("Генерация фантомов: count=%d, size=%dx%d, seed=%d, threads=%d", count, n, m, seed, workers)

    results: dict[int, np.ndarray] = {}
    if workers == 1:
        for idx, rng in enumerate(rngs):
            results[idx] = _phantom(n, m, rng, cv2)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_phantom, n, m, rng, cv2): idx for idx, rng in enumerate(rngs)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    images = np.stack([results[idx] for idx in range(count)])
    duration = time.perf_counter() - start_time
    logger.info("Фантомы готовы: %d шт. за %.2f сек (%.0f изобр./сек)", count, duration, count / max(duration, 1e-9))
    return Dataset(images=images, seed=int(seed))


# =============================================================================
# k-space
# =============================================================================


def _center_crop_kspace(kspace: np.ndarray, n: int, m: int) -> np.ndarray:
    n0, m0 = kspace.shape
    shifted = np.fft.fftshift(kspace)
    r0, c0 = n0 // 2 - n // 2, m0 // 2 - m // 2
    return np.fft.ifftshift(shifted[r0 : r0 + n, c0 : c0 + m])


def simulate_sample(
    image: np.ndarray,
    mask: SamplingMask,
    *,
    kspace_scale: float = KSPACE_SCALE,
    dtype=TRAIN_DTYPE,
) -> Sample:
    """image → dft2 → (центральный crop) → маска → 2-канальный тензор, умноженный на kspace_scale."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"simulate_sample: изображение должно быть 2-мерным, получено {image.shape}")
    n, m = mask.shape
    n0, m0 = image.shape
    if n0 < n or m0 < m:
        raise ShapeError(f"simulate_sample: изображение {image.shape} меньше маски {mask.shape}")

    kspace = dft2_fast(image.astype(np.complex128))
    if (n0, m0) != (n, m):
        kspace = _center_crop_kspace(kspace, n, m) * (n * m) / (n0 * m0)
        target = np.abs(idft2_fast(kspace))
    else:
        target = image

    masked = apply_mask(kspace, mask) * kspace_scale
    return Sample(target=target[None, None].astype(dtype), input=embed(masked, dtype=dtype))


def zero_filled(inputs: np.ndarray, *, kspace_scale: float = KSPACE_SCALE) -> np.ndarray:
    """Zero-filled реконструкция: |idft2(masked k-space)| / kspace_scale, форма (B, 1, N, M)."""
    recon = np.abs(idft2_fast(unembed(inputs))) / kspace_scale
    return recon[:, None].astype(inputs.dtype)


def build_training_arrays(
    dataset: Dataset,
    mask: SamplingMask,
    *,
    kspace_scale: float = KSPACE_SCALE,
    dtype=TRAIN_DTYPE,
    per_sample_masks: bool = False,
    threads: int | None = None,
) -> TrainingArrays:
    """Симулирует все пары датасета. per_sample_masks: для изображения i маска с seed = mask.seed + i."""
    workers = max(1, int(NUM_THREADS if threads is None else threads))

    def _one(idx: int) -> Sample:
        sample_mask = mask
        if per_sample_masks and idx > 0:
            sample_mask = make_mask(mask.pattern, mask.shape[0], mask.shape[1], mask.af, mask.seed + idx)
        return simulate_sample(dataset.images[idx], sample_mask, kspace_scale=kspace_scale, dtype=dtype)

    results: dict[int, Sample] = {}
    if workers == 1:
        for idx in range(dataset.count):
            results[idx] = _one(idx)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_one, idx): idx for idx in range(dataset.count)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    ordered = [results[idx] for idx in range(dataset.count)]
    return TrainingArrays(
        inputs=np.concatenate([s.input for s in ordered]),
        targets=np.concatenate([s.target for s in ordered]),
    )


# =============================================================================
# Файл датасета
# =============================================================================


def dataset_to_bytes(dataset: Dataset) -> bytes:
    count, (n, m) = dataset.count, dataset.shape
    header = _HEADER.pack(DATASET_FILE_MAGIC, DATASET_FILE_VERSION, count, n, m, 0, int(dataset.seed))
    return header + np.ascontiguousarray(dataset.images, dtype="<f4").tobytes()


def dataset_from_bytes(data: bytes) -> Dataset:
    if len(data) < _HEADER.size:
        raise FormatError(f"Файл датасета короче заголовка ({_HEADER.size} байт)", offset=len(data))
    magic, version, count, n, m, dtype_code, seed = _HEADER.unpack_from(data, 0)
    if magic != DATASET_FILE_MAGIC:
        raise FormatError(f"Неверная сигнатура датасета: {magic!r}", offset=0)
    if version != DATASET_FILE_VERSION:
        raise FormatError(f"Неподдерживаемая версия датасета: {version}", offset=4)
    if count == 0:
        raise FormatError("Пустой датасет (count = 0)", offset=5)
    if n == 0 or m == 0:
        raise FormatError(f"Нулевой размер изображения {n}x{m}", offset=9 if n == 0 else 13)
    if dtype_code not in _DTYPE_CODES:
        raise FormatError(f"Неизвестный код dtype: {dtype_code}", offset=17)

    item = _DTYPE_CODES[dtype_code]
    expected = _HEADER.size + count * n * m * item.itemsize
    if len(data) < expected:
        raise FormatError(f"Файл датасета обрезан: ожидалось {expected} байт, получено {len(data)}", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"Лишние байты в конце датасета ({len(data) - expected})", offset=expected)

    images = np.frombuffer(data, dtype=item, count=count * n * m, offset=_HEADER.size)
    bad = np.flatnonzero(~((images >= 0.0) & (images <= 1.0)))
    if bad.size:
        raise FormatError(
            f"Пиксель вне [0, 1]: {float(images[bad[0]])}",
            offset=_HEADER.size + int(bad[0]) * item.itemsize,
        )
    return Dataset(images=images.reshape(count, n, m).astype(np.float32), seed=int(seed))


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    out_path = Path(path).expanduser().resolve()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(dataset_to_bytes(dataset))
    logger.info("Датасет сохранён: %s (count=%d, %dx%d)", out_path, dataset.count, *dataset.shape)
    return out_path


def read_dataset(path: str | Path) -> Dataset:
    return dataset_from_bytes(Path(path).expanduser().resolve().read_bytes())
