"""Единый конфиг проекта dAUTOMAP.

Принцип: "config — источник правды". Значения не должны переопределяться внутри сервисов.
Если нужно изменить поведение — меняем константы здесь (или передаём явный аргумент/флаг CLI).
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

# Обязательная инициализация логирования вынесена в util, но настройки — тут (config = truth).
from utils.logging_utils import setup_console_logging

PROJECT_ROOT = Path(__file__).parent.resolve()

# .env в корне проекта (необязателен): DAUTOMAP_NUM_THREADS, DAUTOMAP_LOG_LEVEL
load_dotenv(PROJECT_ROOT / ".env")

# -----------------------------
# Логирование
# -----------------------------
LOG_LEVEL = getattr(logging, os.getenv("DAUTOMAP_LOG_LEVEL", "INFO").upper(), logging.INFO)
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

setup_console_logging(level=LOG_LEVEL, fmt=LOG_FORMAT)
logger = logging.getLogger("dAUTOMAP")

# -----------------------------
# Параллельность
# -----------------------------
# Количество рабочих потоков по умолчанию. 1 = детерминированный однопоточный режим
# (тесты воспроизводимости гоняются именно в нём).
NUM_THREADS = max(1, int(os.getenv("DAUTOMAP_NUM_THREADS", "1") or 1))

# -----------------------------
# Численные примитивы
# -----------------------------
# Точность обучения и точность верификации (оракулы, проверка градиентов).
TRAIN_DTYPE = "float32"
VERIFY_DTYPE = "float64"

# Шаг центральных разностей и порог относительной ошибки при проверке градиентов.
GRAD_CHECK_STEP = 1e-5
GRAD_CHECK_TOLERANCE = 1e-4

# -----------------------------
# DFT оракулы
# -----------------------------
# Предел N·M для явной материализации произведения Кронекера (память растёт как (N·M)^2).
KRON_MAX_ELEMENTS = 4096

# Порог точности для проверки DT-блока против оракула (dft-check).
DFT_CHECK_TOLERANCE = 1e-8
DFT_CHECK_SIZES = (2, 4, 8, 16, 32, 64)

# -----------------------------
# Модель
# -----------------------------
# Свёрточный автоэнкодер после DT-блоков: (вход, выход, размер ядра).
AUTOENCODER_LAYERS = ((2, 64, 5), (64, 64, 5), (64, 1, 7))

# Внешнее сопряжённое транспонирование в конце DT-блока (как в формуле разложения).
DT_FINAL_CONJ = True

# Максимальная сторона сетки для маленького бейзлайна AUTOMAP (полносвязные слои ~n^4).
AUTOMAP_TINY_MAX_SIDE = 32

# -----------------------------
# Маски undersampling
# -----------------------------
# Доля центральных строк, которые всегда входят в декартову маску.
CARTESIAN_CENTER_FRACTION = 0.08

# Центральный блок, который всегда включён в маски Poisson/VDP.
POISSON_CENTER_BLOCK = 4

# Допустимое отклонение достигнутой доли от 1/af (относительное).
MASK_FRACTION_TOLERANCE = 0.1

# Максимум итераций бисекции по радиусу.
POISSON_MAX_BISECTION_ITERATIONS = 20

# Закон роста радиуса для VDP: r(d) = r0 * (1 + VDP_RADIUS_SLOPE * d / d_max)
VDP_RADIUS_SLOPE = 2.0

MASK_FILE_MAGIC = b"DMSK"
MASK_FILE_VERSION = 1

# -----------------------------
# Синтетические фантомы
# -----------------------------
PHANTOM_MIN_INTERIOR_ELLIPSES = 3
PHANTOM_MAX_INTERIOR_ELLIPSES = 8
PHANTOM_SMOOTHING_SIGMA = 1.0
# Амплитуда плавного поля неоднородности интенсивности (мультипликативно, ±).
PHANTOM_BIAS_AMPLITUDE = 0.1

DATASET_FILE_MAGIC = b"DSET"
DATASET_FILE_VERSION = 1

# Масштаб k-space на входе сети (множитель к симулированным данным).
KSPACE_SCALE = 1.0

# -----------------------------
# Метрики
# -----------------------------
SSIM_WINDOW_SIZE = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

HFEN_KERNEL_SIZE = 15
HFEN_SIGMA = 1.5

# До какого числа ненулевых разностей Wilcoxon считается точным перебором.
WILCOXON_EXACT_MAX_N = 20
WILCOXON_MIN_PAIRS = 6

# -----------------------------
# Оптимизаторы
# -----------------------------
ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

RMSPROP_LR = 2e-5
RMSPROP_ALPHA = 0.99
RMSPROP_EPS = 1e-8

# -----------------------------
# Обучение
# -----------------------------
TRAIN_EPOCHS = 1000
TRAIN_BATCH_SIZE = 16
TRAIN_EVAL_EVERY = 50
# Вес L1-штрафа на активации автоэнкодера ("sparse" автоэнкодер).
L1_ACTIVITY_WEIGHT = 1e-4

CHECKPOINT_MANIFEST_NAME = "manifest.json"
CHECKPOINT_BLOB_NAME = "tensors.bin"
CHECKPOINT_FORMAT_VERSION = 1

# -----------------------------
# Бенчмарк
# -----------------------------
BENCH_WARMUP_RUNS = 10
BENCH_RUNS = 50

# -----------------------------
# CLI
# -----------------------------
# Размеры сеток по умолчанию для `params` и `bench`.
CLI_DEFAULT_SIZES = (128, 256)
CLI_DEFAULT_SIZE = 32
CLI_DEFAULT_COUNT = 200
