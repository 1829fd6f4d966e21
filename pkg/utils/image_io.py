"""Экспорт изображений в 8-битный PGM (P5) через Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(image: np.ndarray, *, scale: float = 1.0) -> np.ndarray:
    """[0, scale] → [0, 255] с обрезкой и округлением."""
    if scale <= 0:
        return np.zeros(np.shape(image), dtype=np.uint8)
    normalized = np.clip(np.asarray(image, dtype=np.float64) / scale, 0.0, 1.0)
    return np.rint(normalized * 255.0).astype(np.uint8)


def error_map(prediction: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, float]:
    """|pred − ref|, растянутая на [0, 255] по максимуму карты. Возвращает (uint8, максимум)."""
    diff = np.abs(np.asarray(prediction, dtype=np.float64) - np.asarray(reference, dtype=np.float64))
    peak = float(diff.max()) if diff.size else 0.0
    return to_uint8(diff, scale=peak), peak


def save_pgm(pixels: np.ndarray, path: str | Path) -> Path:
    out_path = Path(path).expanduser().resolve()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    # 2-мерный uint8 → режим L, формат PPM → бинарный P5
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(out_path, format="PPM")
    return out_path
