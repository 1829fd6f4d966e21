"""Сеть dAUTOMAP, маленький бейзлайн AUTOMAP и аналитические счётчики параметров.

dAUTOMAP:
    k-space (B, 2, N, M) → DT-блок 1 → ReLU → DT-блок 2 → ReLU
    → conv_same(2→64, 5) → ReLU → conv_same(64→64, 5) → ReLU → conv_same(64→1, 7)

AUTOMAP (только n ≤ AUTOMAP_TINY_MAX_SIDE):
    flatten → FC(2n²→n²) → tanh → FC(n²→n²) → tanh → (B, 1, n, n) → тот же автоэнкодер,
    но первая свёртка принимает один канал (1→64).

Все веса хранятся в `ModelParams.tensors` под уникальными именами — по ним
строится манифест чекпойнта и считаются градиенты.

Публичный API:
    - ModelSpec, ModelParams, ForwardResult
    - init_params(), linear_diagnostic_params()
    - build_forward() — прямой проход на ленте (для обучения)
    - dautomap_forward(), automap_tiny_forward(), forward() — инференс
    - dautomap_param_count(), automap_param_count(), automap_tiny_param_count()
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from config import AUTOENCODER_LAYERS, AUTOMAP_TINY_MAX_SIDE, DT_FINAL_CONJ, TRAIN_DTYPE
from services.dt_layer import (
    dt_block_graph,
    dt_layer_param_count,
    fourier_block_init,
    identity_init,
    random_init,
)
from services.errors import ConfigurationError, ResourceError, ShapeError
from services.numerics import GradTape, Value
from utils.rng import make_rng

ModelKind = Literal["dautomap", "automap"]

DT_BLOCKS = ("dt1", "dt2")
DT_AXES = ("rows", "cols")
AE_NAMES = ("ae.conv1", "ae.conv2", "ae.conv3")


# =============================================================================
# Описание модели
# =============================================================================


class ModelSpec(BaseModel):
    """Архитектура модели (сохраняется в манифест чекпойнта)."""

    kind: ModelKind = Field("dautomap", description="dautomap или automap (маленький бейзлайн)")
    n: int = Field(..., ge=1, description="Строки k-space сетки")
    m: int = Field(..., ge=1, description="Столбцы k-space сетки")
    final_conj: bool = Field(DT_FINAL_CONJ, description="Внешнее сопряжение в конце DT-блока")
    linear: bool = Field(False, description="Диагностический линейный режим (ReLU отключены)")

    @model_validator(mode="after")
    def _check_automap(self) -> "ModelSpec":
        if self.kind == "automap":
            if self.n != self.m:
                raise ConfigurationError(f"AUTOMAP: сетка должна быть квадратной, получено {self.n}x{self.m}")
            if self.n > AUTOMAP_TINY_MAX_SIDE:
                raise ResourceError(
                    f"AUTOMAP: сторона {self.n} > {AUTOMAP_TINY_MAX_SIDE}, "
                    f"полносвязные слои потребовали бы ~{automap_param_count(self.n):,} параметров"
                )
        return self


def _autoencoder_layers(kind: ModelKind) -> list[tuple[int, int, int]]:
    layers = [tuple(layer) for layer in AUTOENCODER_LAYERS]
    if kind == "automap":
        # выход FC — одноканальное изображение
        _, c_out, k = layers[0]
        layers[0] = (1, c_out, k)
    return layers


def expected_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Имена и формы всех тензоров модели в фиксированном порядке."""
    shapes: dict[str, tuple[int, ...]] = {}
    if spec.kind == "dautomap":
        for block in DT_BLOCKS:
            for axis, size in zip(DT_AXES, (spec.n, spec.m)):
                shapes[f"{block}.{axis}.kernel"] = (2 * size, 2, size, 1)
                shapes[f"{block}.{axis}.bias"] = (2 * size,)
    else:
        pixels = spec.n * spec.m
        shapes["fc1.weight"] = (pixels, 2 * pixels)
        shapes["fc1.bias"] = (pixels,)
        shapes["fc2.weight"] = (pixels, pixels)
        shapes["fc2.bias"] = (pixels,)
    for name, (c_in, c_out, k) in zip(AE_NAMES, _autoencoder_layers(spec.kind)):
        shapes[f"{name}.kernel"] = (c_out, c_in, k, k)
        shapes[f"{name}.bias"] = (c_out,)
    return shapes


@dataclass
class ModelParams:
    """Именованные тензоры модели."""

    spec: ModelSpec
    tensors: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        expected = expected_shapes(self.spec)
        if list(self.tensors) != list(expected):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            if missing or extra:
                raise ShapeError(f"ModelParams: нет тензоров {missing}, лишние {extra}")
            self.tensors = {name: self.tensors[name] for name in expected}
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ShapeError(f"ModelParams: {name} формы {self.tensors[name].shape}, ожидалось {shape}")

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.tensors.values())).dtype

    def param_count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(spec=self.spec, tensors={k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "ModelParams":
        return ModelParams(spec=self.spec, tensors={k: v.copy() for k, v in self.tensors.items()})


# =============================================================================
# Инициализация
# =============================================================================


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_params(spec: ModelSpec, seed: int, *, dtype=TRAIN_DTYPE) -> ModelParams:
    """Случайная инициализация (поток "init"): DT ±sqrt(1/(2A)), свёртки и FC ±1/sqrt(fan_in), bias 0."""
    rng = make_rng(seed, "init")
    tensors: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(spec).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=dtype)
        elif name.startswith("dt"):
            tensors[name] = random_init(shape[2], rng, dtype=dtype).kernel
        elif name.startswith("fc"):
            tensors[name] = _uniform(rng, shape, shape[1]).astype(dtype)
        else:
            c_out, c_in, k, _ = shape
            tensors[name] = _uniform(rng, shape, c_in * k * k).astype(dtype)
    return ModelParams(spec=spec, tensors=tensors)


def linear_diagnostic_params(n: int, m: int, *, dtype="float64") -> ModelParams:
    """Линейная модель, восстанавливающая Re(idft2(k-space)).

    Блок 1 — обратное DFT, блок 2 — тождество, автоэнкодер пропускает канал 0.
    """
    spec = ModelSpec(kind="dautomap", n=n, m=m, final_conj=True, linear=True)
    rows, cols = fourier_block_init(n, m, "inverse", dtype=dtype)
    tensors = {
        "dt1.rows.kernel": rows.kernel,
        "dt1.rows.bias": rows.bias,
        "dt1.cols.kernel": cols.kernel,
        "dt1.cols.bias": cols.bias,
    }
    for axis, size in zip(DT_AXES, (n, m)):
        identity = identity_init(size, dtype=dtype)
        tensors[f"dt2.{axis}.kernel"] = identity.kernel
        tensors[f"dt2.{axis}.bias"] = identity.bias
    for name, (c_in, c_out, k) in zip(AE_NAMES, _autoencoder_layers("dautomap")):
        kernel = np.zeros((c_out, c_in, k, k), dtype=dtype)
        kernel[0, 0, k // 2, k // 2] = 1.0
        tensors[f"{name}.kernel"] = kernel
        tensors[f"{name}.bias"] = np.zeros(c_out, dtype=dtype)
    return ModelParams(spec=spec, tensors=tensors)


# =============================================================================
# Прямой проход
# =============================================================================


@dataclass
class ForwardResult:
    output: Value
    features: Value
    leaves: dict[str, Value]


def _maybe_relu(tape: GradTape, x: Value, linear: bool) -> Value:
    return x if linear else tape.relu(x)


def _autoencoder_graph(tape: GradTape, h: Value, leaves: dict[str, Value], linear: bool) -> tuple[Value, Value]:
    h = _maybe_relu(tape, tape.conv2d_same(h, leaves["ae.conv1.kernel"], leaves["ae.conv1.bias"]), linear)
    features = _maybe_relu(tape, tape.conv2d_same(h, leaves["ae.conv2.kernel"], leaves["ae.conv2.bias"]), linear)
    out = tape.conv2d_same(features, leaves["ae.conv3.kernel"], leaves["ae.conv3.bias"])
    return out, features


def _check_input(kspace: np.ndarray, spec: ModelSpec, dtype: np.dtype) -> None:
    if kspace.ndim != 4 or kspace.shape[1:] != (2, spec.n, spec.m):
        raise ShapeError(f"Вход модели формы {kspace.shape}, ожидалось (B, 2, {spec.n}, {spec.m})")
    if kspace.dtype != dtype:
        raise ConfigurationError(f"dtype входа {kspace.dtype} не совпадает с dtype весов {dtype}")


def build_forward(
    tape: GradTape,
    params: ModelParams,
    kspace: np.ndarray,
    *,
    trainable: bool = True,
    leaves: dict[str, Value] | None = None,
) -> ForwardResult:
    """Строит прямой проход на ленте; листья весов получают имена тензоров.

    `leaves` — уже зарегистрированные на ленте листья весов (проверка градиентов).
    """
    spec = params.spec
    _check_input(kspace, spec, params.dtype)
    if leaves is None:
        leaves = {name: tape.leaf(t, name=name, trainable=trainable) for name, t in params.tensors.items()}
    elif set(leaves) != set(params.tensors):
        raise ShapeError(f"build_forward: листья {sorted(set(params.tensors) - set(leaves))} не переданы")
    x = tape.leaf(kspace)

    if spec.kind == "dautomap":
        h = x
        for block in DT_BLOCKS:
            h = dt_block_graph(
                tape,
                h,
                (leaves[f"{block}.rows.kernel"], leaves[f"{block}.rows.bias"]),
                (leaves[f"{block}.cols.kernel"], leaves[f"{block}.cols.bias"]),
                final_conj=spec.final_conj,
            )
            h = _maybe_relu(tape, h, spec.linear)
    else:
        batch = kspace.shape[0]
        h = tape.reshape(x, (batch, 2 * spec.n * spec.m))
        h = tape.tanh(tape.dense(h, leaves["fc1.weight"], leaves["fc1.bias"]))
        h = tape.tanh(tape.dense(h, leaves["fc2.weight"], leaves["fc2.bias"]))
        h = tape.reshape(h, (batch, 1, spec.n, spec.m))

    out, features = _autoencoder_graph(tape, h, leaves, spec.linear)
    return ForwardResult(output=out, features=features, leaves=leaves)


def forward(kspace: np.ndarray, params: ModelParams, *, threads: int | None = None) -> np.ndarray:
    """Инференс: (B, 2, N, M) → (B, 1, N, M)."""
    tape = GradTape(enabled=False, threads=threads)
    return build_forward(tape, params, kspace, trainable=False).output.data


def dautomap_forward(kspace: np.ndarray, params: ModelParams, *, threads: int | None = None) -> np.ndarray:
    if params.spec.kind != "dautomap":
        raise ConfigurationError(f"dautomap_forward: модель {params.spec.kind}")
    return forward(kspace, params, threads=threads)


def automap_tiny_forward(kspace: np.ndarray, params: ModelParams, *, threads: int | None = None) -> np.ndarray:
    if params.spec.kind != "automap":
        raise ConfigurationError(f"automap_tiny_forward: модель {params.spec.kind}")
    if kspace.ndim == 4 and kspace.shape[2] > AUTOMAP_TINY_MAX_SIDE:
        raise ResourceError(f"AUTOMAP: сторона {kspace.shape[2]} > {AUTOMAP_TINY_MAX_SIDE}")
    return forward(kspace, params, threads=threads)


# =============================================================================
# Счётчики параметров
# =============================================================================


def autoencoder_param_count(kind: ModelKind = "dautomap") -> int:
    return sum(c_out * c_in * k * k + c_out for c_in, c_out, k in _autoencoder_layers(kind))


def dautomap_param_count(n: int, m: int) -> int:
    """Два DT-блока по два слоя плюс автоэнкодер; линейно по числу пикселей."""
    return 2 * dt_layer_param_count(n) + 2 * dt_layer_param_count(m) + autoencoder_param_count()


def automap_param_count(n_side: int) -> int:
    """FC1 (2n→n) + FC2 (n→n) со смещениями плюс автоэнкодер, n = n_side²; квадратично по пикселям."""
    pixels = n_side * n_side
    return 2 * pixels * pixels + pixels + pixels * pixels + pixels + autoencoder_param_count()


def automap_tiny_param_count(n_side: int) -> int:
    return automap_param_count(n_side) - autoencoder_param_count() + autoencoder_param_count("automap")


def param_memory_bytes(count: int, dtype=TRAIN_DTYPE) -> int:
    return int(count) * np.dtype(dtype).itemsize
