"""Настройка консольного логирования и баннеры шагов пайплайна.

Уровень и формат задаются в `config.py`; здесь только код, который их применяет.
"""

from __future__ import annotations

import logging

# сторонние логгеры, которые на DEBUG засоряют вывод обучения
_NOISY_LOGGERS = ("PIL", "openpyxl")

BANNER_WIDTH = 60


def setup_console_logging(*, level: int, fmt: str) -> None:
    """Консольный хендлер для корневого логгера (повторный вызов ничего не добавляет)."""
    logging.basicConfig(level=level, format=fmt)
    for name in _NOISY_LOGGERS:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))


def log_step_banner(logger: logging.Logger, title: str) -> None:
    logger.info("=" * BANNER_WIDTH)
    logger.info(title)
    logger.info("=" * BANNER_WIDTH)
