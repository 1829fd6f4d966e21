"""Оптимизаторы Adam и RMSProp (соглашения PyTorch).

Adam:    m = β1·m + (1−β1)·g;  v = β2·v + (1−β2)·g²;
         p −= lr · (m / (1−β1^t)) / (sqrt(v / (1−β2^t)) + ε)
RMSProp: v = α·v + (1−α)·g²;   p −= lr · g / (sqrt(v) + ε)

Параметры обновляются на месте. Буферы состояния имеют те же формы и dtype,
что и параметры, и сохраняются в чекпойнт вместе с весами.

Публичный API:
    - OptimizerState, init_optimizer_state()
    - adam_step(), rmsprop_step(), optimizer_step()
    - clip_grad_norm()
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAM_LR, RMSPROP_ALPHA, RMSPROP_EPS, RMSPROP_LR
from services.errors import ConfigurationError, ContractError, ShapeError, TrainingError

OptimizerKind = Literal["adam", "rmsprop"]

DEFAULT_LR: dict[str, float] = {"adam": ADAM_LR, "rmsprop": RMSPROP_LR}

# имена буферов по видам оптимизатора
_BUFFERS: dict[str, tuple[str, ...]] = {"adam": ("m", "v"), "rmsprop": ("v",)}


@dataclass
class OptimizerState:
    """Гиперпараметры, счётчик шагов и буферы моментов (ключ — (буфер, имя параметра))."""

    kind: OptimizerKind
    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    alpha: float = RMSPROP_ALPHA
    eps: float = ADAM_EPS
    step: int = 0
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def hyperparameters(self) -> dict[str, float]:
        if self.kind == "adam":
            return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}
        return {"lr": self.lr, "alpha": self.alpha, "eps": self.eps}

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        """Плоский список ("m/<param>", array) в детерминированном порядке."""
        return [
            (f"{buffer}/{name}", arr)
            for buffer in _BUFFERS[self.kind]
            for name, arr in self.buffers[buffer].items()
        ]


def init_optimizer_state(
    kind: str,
    params: dict[str, np.ndarray],
    *,
    lr: float | None = None,
    eps: float | None = None,
) -> OptimizerState:
    if kind not in _BUFFERS:
        raise ConfigurationError(f"Неизвестный оптимизатор: {kind} (доступны {sorted(_BUFFERS)})")
    rate = DEFAULT_LR[kind] if lr is None else float(lr)
    if rate < 0 or not math.isfinite(rate):
        raise ConfigurationError(f"Learning rate должен быть конечным и ≥ 0, получено {rate}")
    state = OptimizerState(kind=kind, lr=rate)
    if eps is not None:
        state.eps = float(eps)
    elif kind == "rmsprop":
        state.eps = RMSPROP_EPS
    state.buffers = {buffer: {name: np.zeros_like(p) for name, p in params.items()} for buffer in _BUFFERS[kind]}
    return state


def _check_grads(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    for name, p in params.items():
        if name not in grads:
            raise ContractError(f"Нет градиента для параметра {name}")
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"Градиент {name} формы {g.shape}, параметр {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"Нечисловой градиент в тензоре {name} (шаг {state.step + 1})", tensor=name)
        for buffer in _BUFFERS[state.kind]:
            if state.buffers[buffer].get(name) is None or state.buffers[buffer][name].shape != p.shape:
                raise ShapeError(f"Буфер {buffer}/{name} не соответствует параметру {p.shape}")


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    if state.kind != "adam":
        raise ConfigurationError(f"adam_step: состояние оптимизатора {state.kind}")
    _check_grads(params, grads, state)
    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.buffers["m"][name]
        v = state.buffers["v"][name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return params, state


def rmsprop_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    if state.kind != "rmsprop":
        raise ConfigurationError(f"rmsprop_step: состояние оптимизатора {state.kind}")
    _check_grads(params, grads, state)
    state.step += 1
    for name, p in params.items():
        g = grads[name]
        v = state.buffers["v"][name]
        v *= state.alpha
        v += (1.0 - state.alpha) * (g * g)
        p -= state.lr * g / (np.sqrt(v) + state.eps)
    return params, state


def optimizer_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    if state.kind == "adam":
        return adam_step(params, grads, state)
    return rmsprop_step(params, grads, state)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Глобальный клип по L2-норме. Возвращает (новые градиенты, норма до клипа)."""
    if max_norm <= 0:
        raise ConfigurationError(f"max_norm должен быть > 0, получено {max_norm}")
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if total <= max_norm:
        return dict(grads), total
    scale = max_norm / (total + 1e-6)
    return {name: g * np.asarray(scale, dtype=g.dtype) for name, g in grads.items()}, total
