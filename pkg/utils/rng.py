"""Детерминированные генераторы случайных чисел.

Используем PCG64 из numpy (малое состояние, 128 бит) с `SeedSequence`:
поток определяется парой (seed, имя потока), поэтому порядок данных,
инициализация весов и маски не зависят друг от друга.
"""

from __future__ import annotations

import zlib

import numpy as np

# Именованные потоки. Значения фиксированы — менять нельзя (сломается воспроизводимость).
STREAMS: dict[str, int] = {
    "mask": 1,
    "data": 2,
    "init": 3,
    "shuffle": 4,
    "bench": 5,
}


def _stream_key(stream: str) -> int:
    if stream in STREAMS:
        return STREAMS[stream]
    # Неизвестные имена тоже детерминированы (crc32 не зависит от PYTHONHASHSEED).
    return 1000 + zlib.crc32(stream.encode("utf-8"))


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """Генератор для потока `stream`, полностью определяемый `seed`."""
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(_stream_key(stream),))
    return np.random.Generator(np.random.PCG64(seq))


def spawn_rngs(seed: int, stream: str, count: int) -> list[np.random.Generator]:
    """Независимые генераторы для элементов (например, по одному на изображение)."""
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(_stream_key(stream),))
    return [np.random.Generator(np.random.PCG64(child)) for child in seq.spawn(int(count))]
