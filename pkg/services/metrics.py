"""Метрики качества реконструкции и парный тест Уилкоксона.

Константы (нигде не заданы явно, поэтому зафиксированы здесь через config):
- PSNR: peak = max(ref); при x == ref возвращается math.inf.
- SSIM: гауссово окно 11×11, σ = 1.5, K1 = 0.01, K2 = 0.03, L = диапазон ref;
  усреднение только по позициям, где окно целиком внутри изображения.
- HFEN: ||LoG(x) − LoG(ref)||₂ / ||LoG(ref)||₂, ядро LoG 15×15, σ = 1.5, нулевой паддинг.
- Wilcoxon: нулевые разности отбрасываются, ранги связок — средние;
  точное распределение при n ≤ 20, иначе нормальное приближение с поправкой
  на связки и непрерывность.

Публичный API:
    - mse(), psnr(), ssim(), hfen()
    - wilcoxon_signed_rank() → WilcoxonResult
    - RunningStats, MetricSummary, MetricReport
    - evaluate_images() — отчёт по набору изображений
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage, stats

from config import (
    HFEN_KERNEL_SIZE,
    HFEN_SIGMA,
    NUM_THREADS,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW_SIZE,
    WILCOXON_EXACT_MAX_N,
    WILCOXON_MIN_PAIRS,
    logger,
)
from services.errors import ConfigurationError, DegenerateError, MetricUndefinedError, ShapeError

METRIC_NAMES = ("mse", "psnr", "ssim", "hfen")


def _import_cv2():
    try:
        import cv2  # type: ignore

        return cv2
    except Exception as e:  # pragma: no cover
        raise RuntimeError("Нужен пакет `opencv-python` для SSIM.") from e


def _pair(x, ref) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ShapeError(f"Формы не совпадают: {x.shape} vs {ref.shape}")
    return x, ref


def _as_image(x: np.ndarray) -> np.ndarray:
    """Убирает единичные оси (1, 1, N, M) → (N, M)."""
    img = np.squeeze(x)
    if img.ndim != 2:
        raise ShapeError(f"Ожидалось 2-мерное изображение, получено {x.shape}")
    return img


# =============================================================================
# Метрики
# =============================================================================


def mse(x, ref) -> float:
    x, ref = _pair(x, ref)
    diff = x - ref
    return float(np.mean(diff * diff))


def psnr(x, ref) -> float:
    """10·log10(peak²/mse), peak = max(ref)."""
    x, ref = _pair(x, ref)
    peak = float(np.max(ref))
    if peak <= 0 or float(np.ptp(ref)) == 0.0:
        raise MetricUndefinedError(f"PSNR не определён: max(ref)={peak}, диапазон ref={float(np.ptp(ref))}")
    error = mse(x, ref)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / error)


def ssim(x, ref, *, data_range: float | None = None) -> float:
    """Среднее локальное SSIM; data_range по умолчанию — диапазон ref."""
    x, ref = _pair(x, ref)
    x, ref = _as_image(x), _as_image(ref)
    half = SSIM_WINDOW_SIZE // 2
    if x.shape[0] < SSIM_WINDOW_SIZE or x.shape[1] < SSIM_WINDOW_SIZE:
        raise ConfigurationError(f"SSIM: изображение {x.shape} меньше окна {SSIM_WINDOW_SIZE}x{SSIM_WINDOW_SIZE}")
    dynamic_range = float(np.ptp(ref)) if data_range is None else float(data_range)
    if dynamic_range <= 0:
        raise MetricUndefinedError(f"SSIM: нулевой диапазон L={dynamic_range}")

    cv2 = _import_cv2()
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    ksize = (SSIM_WINDOW_SIZE, SSIM_WINDOW_SIZE)

    def _blur(img: np.ndarray) -> np.ndarray:
        out = cv2.GaussianBlur(img, ksize, SSIM_SIGMA, sigmaY=SSIM_SIGMA)
        # только позиции, где окно целиком внутри изображения
        return out[half : out.shape[0] - half, half : out.shape[1] - half]

    mu_x, mu_y = _blur(x), _blur(ref)
    sigma_x = _blur(x * x) - mu_x * mu_x
    sigma_y = _blur(ref * ref) - mu_y * mu_y
    sigma_xy = _blur(x * ref) - mu_x * mu_y

    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2))
    return float(np.mean(ssim_map))


def log_kernel(size: int = HFEN_KERNEL_SIZE, sigma: float = HFEN_SIGMA) -> np.ndarray:
    """Лапласиан гауссианы size×size с нулевой суммой."""
    half = size // 2
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    r2 = xx * xx + yy * yy
    gauss = np.exp(-r2 / (2 * sigma * sigma))
    gauss /= gauss.sum()
    kernel = gauss * (r2 - 2 * sigma * sigma) / sigma**4
    return kernel - kernel.mean()


def hfen(x, ref) -> float:
    """Норма LoG-разности, делённая на норму LoG(ref). Несимметрична."""
    x, ref = _pair(x, ref)
    x, ref = _as_image(x), _as_image(ref)
    kernel = log_kernel()
    log_ref = ndimage.convolve(ref, kernel, mode="constant", cval=0.0)
    denominator = float(np.linalg.norm(log_ref))
    if denominator == 0.0:
        raise MetricUndefinedError("HFEN не определён: LoG(ref) тождественно равен нулю")
    log_x = ndimage.convolve(x, kernel, mode="constant", cval=0.0)
    return float(np.linalg.norm(log_x - log_ref)) / denominator


# =============================================================================
# Wilcoxon signed-rank
# =============================================================================


class WilcoxonResult(BaseModel):
    statistic: float = Field(..., description="W+ — сумма рангов положительных разностей")
    p_value: float = Field(..., description="Двусторонний p-value")
    n: int = Field(..., description="Число ненулевых разностей")
    method: Literal["exact", "approx"] = Field(..., description="Как считался p-value")


def _exact_p_value(ranks: np.ndarray, statistic: float) -> float:
    """Точное распределение W+ динамикой по удвоенным рангам (все 2ⁿ расстановок знаков)."""
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    probs = counts / counts.sum()
    observed = int(round(2 * statistic))
    lower = float(probs[: observed + 1].sum())
    upper = float(probs[observed:].sum())
    return min(1.0, 2.0 * min(lower, upper))


def _approx_p_value(ranks: np.ndarray, abs_diff: np.ndarray, statistic: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(abs_diff, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if variance <= 0:
        return 1.0
    deviation = statistic - mean
    correction = 0.5 * np.sign(deviation)
    z = (deviation - correction) / math.sqrt(variance)
    return min(1.0, float(2.0 * stats.norm.sf(abs(z))))


def wilcoxon_signed_rank(a, b, *, method: Literal["auto", "exact", "approx"] = "auto") -> WilcoxonResult:
    """Двусторонний парный тест Уилкоксона для a и b."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"Wilcoxon: длины рядов не совпадают {a.size} vs {b.size}")
    if a.size < WILCOXON_MIN_PAIRS:
        raise ConfigurationError(f"Wilcoxon: нужно ≥ {WILCOXON_MIN_PAIRS} пар, получено {a.size}")
    if method not in ("auto", "exact", "approx"):
        raise ConfigurationError(f"Wilcoxon: неизвестный метод {method}")

    diff = a - b
    if not np.all(np.isfinite(diff)):
        raise MetricUndefinedError("Wilcoxon: в разностях есть inf/nan")
    diff = diff[diff != 0]
    if diff.size == 0:
        raise DegenerateError("Wilcoxon: все разности нулевые")

    abs_diff = np.abs(diff)
    ranks = stats.rankdata(abs_diff, method="average")
    statistic = float(ranks[diff > 0].sum())

    use_exact = method == "exact" or (method == "auto" and diff.size <= WILCOXON_EXACT_MAX_N)
    if use_exact:
        p_value = _exact_p_value(ranks, statistic)
    else:
        p_value = _approx_p_value(ranks, abs_diff, statistic)
    return WilcoxonResult(statistic=statistic, p_value=p_value, n=int(diff.size), method="exact" if use_exact else "approx")


# =============================================================================
# Агрегаты и отчёт
# =============================================================================


class RunningStats:
    """Потоковое среднее и дисперсия (Welford)."""

    def __init__(self) -> None:
        self.count = 0
        self._mean = 0.0
        self._m2 = 0.0

    def push(self, value: float) -> None:
        self.count += 1
        delta = value - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (value - self._mean)

    def extend(self, values) -> "RunningStats":
        for value in values:
            self.push(float(value))
        return self

    @property
    def mean(self) -> float:
        return self._mean if self.count else math.nan

    @property
    def std(self) -> float:
        """Популяционное стандартное отклонение (ddof = 0)."""
        return math.sqrt(self._m2 / self.count) if self.count else math.nan


class MetricSummary(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    mean: float = Field(..., description="Среднее")
    std: float = Field(..., description="Стандартное отклонение (ddof=0)")

    @classmethod
    def from_stats(cls, stats: RunningStats) -> "MetricSummary":
        return cls(mean=stats.mean, std=stats.std)

    @classmethod
    def from_values(cls, values: list[float]) -> "MetricSummary":
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            # +inf у PSNR: среднее бесконечно, разброс не определён
            return cls(mean=float(arr.mean()), std=math.nan)
        return cls.from_stats(RunningStats().extend(arr))


class MetricReport(BaseModel):
    """Метрики по изображениям и агрегаты."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    mse: list[float] = Field(default_factory=list)
    psnr: list[float] = Field(default_factory=list)
    ssim: list[float] = Field(default_factory=list)
    hfen: list[float] = Field(default_factory=list)
    summary: dict[str, MetricSummary] = Field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.mse)

    def recompute_summary(self) -> None:
        self.summary = {name: MetricSummary.from_values(getattr(self, name)) for name in METRIC_NAMES}


def _image_metrics(pred: np.ndarray, ref: np.ndarray) -> tuple[float, float, float, float]:
    return mse(pred, ref), psnr(pred, ref), ssim(pred, ref), hfen(pred, ref)


def evaluate_images(preds: np.ndarray, refs: np.ndarray, *, threads: int | None = None) -> MetricReport:
    """Метрики для пар (preds[i], refs[i]); порядок результатов совпадает с порядком входа."""
    preds = np.asarray(preds)
    refs = np.asarray(refs)
    if preds.shape != refs.shape:
        raise ShapeError(f"evaluate_images: формы не совпадают {preds.shape} vs {refs.shape}")
    count = preds.shape[0]
    if count == 0:
        raise ConfigurationError("evaluate_images: пустой набор")

    workers = max(1, int(NUM_THREADS if threads is None else threads))
    start_time = time.perf_counter()
    results: dict[int, tuple[float, float, float, float]] = {}
    if workers == 1:
        for idx in range(count):
            results[idx] = _image_metrics(preds[idx], refs[idx])
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_image_metrics, preds[idx], refs[idx]): idx for idx in range(count)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    report = MetricReport()
    for idx in range(count):
        value_mse, value_psnr, value_ssim, value_hfen = results[idx]
        report.mse.append(value_mse)
        report.psnr.append(value_psnr)
        report.ssim.append(value_ssim)
        report.hfen.append(value_hfen)
    report.recompute_summary()

    logger.info(
        "Метрики: %d изображений, PSNR %.2f ± %.2f dB, SSIM %.4f (%.2f сек)",
        count,
        report.summary["psnr"].mean,
        report.summary["psnr"].std,
        report.summary["ssim"].mean,
        time.perf_counter() - start_time,
    )
    return report
