"""Иерархия ошибок проекта dAUTOMAP.

Все ошибки наследуются от `DautomapError`, чтобы CLI мог отличить
ожидаемые отказы (код 1 + сообщение) от багов.
"""

from __future__ import annotations


class DautomapError(Exception):
    """Базовая ошибка проекта."""


class ShapeError(DautomapError, ValueError):
    """Несовпадение размерностей (в сообщении — оси, которые не сошлись)."""


class ConfigurationError(DautomapError, ValueError):
    """Недопустимый параметр (чётное ядро, af < 1, окно больше изображения и т.п.)."""


class ContractError(DautomapError):
    """Нарушен контракт вызова (например, backward от нескалярного лосса)."""


class ResourceError(DautomapError):
    """Операция потребовала бы недопустимо много памяти."""


class InfeasibleError(DautomapError):
    """Запрошенная маска не может быть построена."""


class ConvergenceError(DautomapError):
    """Подбор параметра маски не сошёлся."""

    def __init__(self, message: str, *, best_fraction: float):
        super().__init__(message)
        self.best_fraction = best_fraction


class FormatError(DautomapError):
    """Битый или несовместимый файл (в сообщении — смещение в байтах)."""

    def __init__(self, message: str, *, offset: int):
        super().__init__(f"{message} (offset={offset})")
        self.offset = offset


class MetricUndefinedError(DautomapError):
    """Метрика не определена для данного эталона."""


class DegenerateError(DautomapError):
    """Статистический тест вырожден (все разности нулевые)."""


class TrainingError(DautomapError):
    """Ошибка обучения: нечисловые градиенты или лосс."""

    def __init__(self, message: str, *, tensor: str | None = None, last_checkpoint: str | None = None):
        super().__init__(message)
        self.tensor = tensor
        self.last_checkpoint = last_checkpoint


class PipelineError(DautomapError):
    """Базовая ошибка пайплайна (шаги вызваны в неверном порядке и т.п.)."""
