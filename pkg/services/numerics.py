"""Численное ядро: тензоры (batch, channel, height, width), свёртки, ReLU и лента для backward.

Соглашения:
- Тензор — обычный `np.ndarray` ndim=4, C-порядок: index(b,c,h,w) = ((b·C + c)·H + h)·W + w.
- Свёртка — кросс-корреляция (ядро не переворачивается).
- Никакого неявного broadcasting: любое несовпадение форм — `ShapeError`.
- Точность задаётся dtype входа: float32 для обучения, float64 для верификации.
- Субградиент ReLU в нуле равен 0.

Публичный API:
    - conv2d_valid(), conv2d_same(), relu() — чистые функции над массивами
    - GradTape, Value — запись операций для обратного прохода
    - backward() — градиенты по всем обучаемым листьям
    - check_gradients() — сверка с центральными разностями
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config import GRAD_CHECK_STEP, NUM_THREADS
from services.errors import ConfigurationError, ContractError, ShapeError

Tensor4 = np.ndarray

BackwardFn = Callable[[np.ndarray, tuple[bool, ...]], Sequence["np.ndarray | None"]]


# =============================================================================
# Тензоры
# =============================================================================


def as_tensor4(data, dtype=None, *, name: str = "tensor") -> Tensor4:
    """Приводит данные к непрерывному 4-мерному массиву (без копии, если это не нужно)."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.ndim != 4:
        raise ShapeError(
            f"{name}: ожидался тензор (batch, channel, height, width), получено ndim={arr.ndim}"
        )
    return arr


def flat_index(shape: Sequence[int], b: int, c: int, h: int, w: int) -> int:
    """Смещение элемента (b, c, h, w) в row-major буфере тензора формы `shape`."""
    batch, channels, height, width = (int(s) for s in shape)
    for axis, (value, limit) in enumerate(zip((b, c, h, w), (batch, channels, height, width))):
        if not 0 <= value < limit:
            raise ShapeError(f"Индекс вне диапазона по оси {axis}: {value} (размер {limit})")
    return ((b * channels + c) * height + h) * width + w


def _normalize_threads(threads: int | None) -> int:
    value = int(NUM_THREADS if threads is None else threads)
    return value if value > 0 else 1


def _map_batch(fn: Callable[[int], None], count: int, threads: int | None) -> None:
    """Вызывает fn(b) для каждого элемента батча; fn пишет только в свой срез."""
    workers = min(_normalize_threads(threads), count)
    if workers <= 1:
        for b in range(count):
            fn(b)
        return
    with ThreadPoolExecutor(max_workers=workers) as executor:
        # list() пробрасывает исключения из потоков
        list(executor.map(fn, range(count)))


# =============================================================================
# Свёртки
# =============================================================================


def _check_conv_operands(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeError(f"conv2d: вход должен быть 4-мерным, получено ndim={x.ndim}")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d: ядро должно быть 4-мерным (Cout, Cin, Kh, Kw), получено ndim={kernel.ndim}")
    _, c_in, height, width = x.shape
    c_out, k_in, k_h, k_w = kernel.shape
    if k_in != c_in:
        raise ShapeError(f"conv2d: каналы входа (axis 1 = {c_in}) != каналы ядра (axis 1 = {k_in})")
    if k_h > height:
        raise ShapeError(f"conv2d: высота ядра (axis 2 = {k_h}) больше высоты входа (axis 2 = {height})")
    if k_w > width:
        raise ShapeError(f"conv2d: ширина ядра (axis 3 = {k_w}) больше ширины входа (axis 3 = {width})")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias формы {bias.shape}, ожидалось ({c_out},) по axis 0 ядра")
    if not (x.dtype == kernel.dtype == bias.dtype):
        raise ConfigurationError(
            f"conv2d: разные dtype у входа/ядра/bias: {x.dtype}, {kernel.dtype}, {bias.dtype}"
        )


def conv2d_valid(
    x: Tensor4, kernel: Tensor4, bias: np.ndarray, *, threads: int | None = None
) -> Tensor4:
    """Свёртка без паддинга: out[b,o,i,j] = bias[o] + Σ kernel[o,c,u,v]·x[b,c,i+u,j+v].

    Каждый элемент батча считается одной и той же свёрткой и в однопоточном,
    и в многопоточном режиме, поэтому результат побитово не зависит от числа потоков.
    """
    _check_conv_operands(x, kernel, bias)
    batch, _, height, width = x.shape
    c_out, _, k_h, k_w = kernel.shape
    out_h, out_w = height - k_h + 1, width - k_w + 1

    windows = sliding_window_view(x, (k_h, k_w), axis=(2, 3))  # (B, Cin, Ho, Wo, Kh, Kw)
    out = np.empty((batch, c_out, out_h, out_w), dtype=x.dtype)

    def _one(b: int) -> None:
        cols = np.tensordot(windows[b], kernel, axes=([0, 3, 4], [1, 2, 3]))  # (Ho, Wo, Cout)
        out[b] = np.moveaxis(cols, -1, 0) + bias[:, None, None]

    _map_batch(_one, batch, threads)
    return out


def conv2d_valid_backward(
    grad_out: Tensor4,
    x: Tensor4,
    kernel: Tensor4,
    *,
    need_input: bool = True,
    need_params: bool = True,
    threads: int | None = None,
) -> tuple[Tensor4 | None, Tensor4 | None, np.ndarray | None]:
    """Градиенты conv2d_valid по входу, ядру и bias."""
    batch, c_in, height, width = x.shape
    _, _, k_h, k_w = kernel.shape
    out_h, out_w = height - k_h + 1, width - k_w + 1
    if grad_out.shape != (batch, kernel.shape[0], out_h, out_w):
        raise ShapeError(f"conv2d backward: градиент формы {grad_out.shape} не совпадает с выходом")

    grad_kernel = grad_bias = grad_input = None
    if need_params:
        windows = sliding_window_view(x, (k_h, k_w), axis=(2, 3))
        grad_kernel = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_bias = grad_out.sum(axis=(0, 2, 3))

    if need_input:
        grad_input = np.zeros_like(x)

        def _one(b: int) -> None:
            cols = np.tensordot(grad_out[b], kernel, axes=([0], [0]))  # (Ho, Wo, Cin, Kh, Kw)
            cols = np.moveaxis(cols, 2, 0)
            target = grad_input[b]
            for u in range(k_h):
                for v in range(k_w):
                    target[:, u : u + out_h, v : v + out_w] += cols[:, :, :, u, v]

        _map_batch(_one, batch, threads)

    return grad_input, grad_kernel, grad_bias


def pad2d(x: Tensor4, pad_h: int, pad_w: int) -> Tensor4:
    """Нулевой паддинг по двум пространственным осям."""
    return np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))


def same_padding(kernel: Tensor4) -> int:
    """Паддинг для свёртки "same"; ядро должно быть квадратным и нечётным."""
    k_h, k_w = kernel.shape[2], kernel.shape[3]
    if k_h != k_w:
        raise ShapeError(f"conv2d_same: ядро должно быть квадратным, получено {k_h}x{k_w} (axes 2, 3)")
    if k_h % 2 == 0:
        raise ConfigurationError(f"conv2d_same: размер ядра должен быть нечётным, получено K={k_h}")
    return (k_h - 1) // 2


def conv2d_same(
    x: Tensor4, kernel: Tensor4, bias: np.ndarray, *, threads: int | None = None
) -> Tensor4:
    """conv2d_valid над входом, дополненным нулями на (K−1)/2 с каждой стороны."""
    pad = same_padding(kernel)
    return conv2d_valid(pad2d(x, pad, pad), kernel, bias, threads=threads)


def relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.zeros((), dtype=x.dtype))


# =============================================================================
# Лента операций
# =============================================================================


@dataclass(frozen=True, eq=False)
class Value:
    """Значение, полученное на ленте (лист или результат операции)."""

    id: int
    data: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype


@dataclass(frozen=True)
class _Record:
    op: str
    output_id: int
    input_ids: tuple[int, ...]
    backward: BackwardFn


class GradTape:
    """Лента примитивных операций для обратного прохода.

    `enabled=False` — режим инференса: те же вызовы, но ничего не записывается.
    Маски ReLU сохраняются в обоих режимах (по ним проверка градиентов
    отбрасывает координаты, попавшие на излом).
    """

    def __init__(self, *, enabled: bool = True, threads: int | None = None):
        self.enabled = enabled
        self.threads = threads
        self._records: list[_Record] = []
        self._trainable: dict[int, tuple[str, Value]] = {}
        self._needs_grad: set[int] = set()
        self._relu_masks: list[np.ndarray] = []
        self._next_id = 0

    # -------------------------------------------------------------------------
    # Служебное
    # -------------------------------------------------------------------------

    def _new_value(self, data: np.ndarray) -> Value:
        value = Value(id=self._next_id, data=data)
        self._next_id += 1
        return value

    def _emit(self, op: str, data: np.ndarray, inputs: Sequence[Value], backward_fn: BackwardFn) -> Value:
        out = self._new_value(data)
        if self.enabled and any(v.id in self._needs_grad for v in inputs):
            self._records.append(
                _Record(op=op, output_id=out.id, input_ids=tuple(v.id for v in inputs), backward=backward_fn)
            )
            self._needs_grad.add(out.id)
        return out

    @property
    def trainable_names(self) -> list[str]:
        return [name for name, _ in self._trainable.values()]

    def activation_signature(self) -> bytes:
        """Склейка всех масок ReLU, посчитанных на этой ленте."""
        return b"".join(np.packbits(mask).tobytes() for mask in self._relu_masks)

    # -------------------------------------------------------------------------
    # Листья
    # -------------------------------------------------------------------------

    def leaf(self, data, *, name: str | None = None, trainable: bool = False) -> Value:
        """Регистрирует входной массив (без копии — проверка градиентов правит его на месте)."""
        arr = np.asarray(data)
        value = self._new_value(arr)
        if trainable:
            if not name:
                raise ContractError("Обучаемый лист должен иметь имя")
            if name in self.trainable_names:
                raise ContractError(f"Имя обучаемого листа уже занято: {name}")
            self._trainable[value.id] = (name, value)
            self._needs_grad.add(value.id)
        return value

    # -------------------------------------------------------------------------
    # Операции
    # -------------------------------------------------------------------------

    def conv2d_valid(self, x: Value, kernel: Value, bias: Value) -> Value:
        data = conv2d_valid(x.data, kernel.data, bias.data, threads=self.threads)

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            gx, gk, gb = conv2d_valid_backward(
                g,
                x.data,
                kernel.data,
                need_input=needs[0],
                need_params=needs[1] or needs[2],
                threads=self.threads,
            )
            return gx, gk, gb

        return self._emit("conv2d_valid", data, (x, kernel, bias), _backward)

    def pad2d(self, x: Value, pad_h: int, pad_w: int) -> Value:
        height, width = x.shape[2], x.shape[3]

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (np.ascontiguousarray(g[:, :, pad_h : pad_h + height, pad_w : pad_w + width]),)

        return self._emit("pad2d", pad2d(x.data, pad_h, pad_w), (x,), _backward)

    def conv2d_same(self, x: Value, kernel: Value, bias: Value) -> Value:
        pad = same_padding(kernel.data)
        return self.conv2d_valid(self.pad2d(x, pad, pad), kernel, bias)

    def relu(self, x: Value) -> Value:
        mask = x.data > 0
        self._relu_masks.append(mask)
        data = np.where(mask, x.data, np.zeros((), dtype=x.dtype))

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (np.where(mask, g, np.zeros((), dtype=g.dtype)),)

        return self._emit("relu", data, (x,), _backward)

    def tanh(self, x: Value) -> Value:
        data = np.tanh(x.data)

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (g * (1 - data * data),)

        return self._emit("tanh", data, (x,), _backward)

    def dense(self, x: Value, weight: Value, bias: Value) -> Value:
        """Полносвязный слой: x[B, F] · weightᵀ[F, O] + bias[O]."""
        if x.data.ndim != 2 or weight.data.ndim != 2:
            raise ShapeError(f"dense: ожидались 2-мерные x и weight, получено {x.shape} и {weight.shape}")
        if weight.shape[1] != x.shape[1]:
            raise ShapeError(f"dense: признаки x (axis 1 = {x.shape[1]}) != входы weight (axis 1 = {weight.shape[1]})")
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"dense: bias формы {bias.shape}, ожидалось ({weight.shape[0]},)")
        data = x.data @ weight.data.T + bias.data

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            gx = g @ weight.data if needs[0] else None
            gw = g.T @ x.data if needs[1] else None
            gb = g.sum(axis=0) if needs[2] else None
            return gx, gw, gb

        return self._emit("dense", data, (x, weight, bias), _backward)

    def reshape(self, x: Value, shape: Sequence[int]) -> Value:
        source_shape = x.shape
        try:
            data = x.data.reshape(tuple(shape))
        except ValueError as e:
            raise ShapeError(f"reshape: {source_shape} нельзя привести к {tuple(shape)}") from e

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (g.reshape(source_shape),)

        return self._emit("reshape", data, (x,), _backward)

    def linear_map(
        self,
        x: Value,
        forward: Callable[[np.ndarray], np.ndarray],
        adjoint: Callable[[np.ndarray], np.ndarray],
        *,
        op: str = "linear_map",
    ) -> Value:
        """Произвольное линейное отображение, заданное парой (forward, adjoint)."""

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (adjoint(g),)

        return self._emit(op, forward(x.data), (x,), _backward)

    def add(self, a: Value, b: Value) -> Value:
        if a.shape != b.shape:
            raise ShapeError(f"add: формы не совпадают {a.shape} vs {b.shape}")

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return g, g

        return self._emit("add", a.data + b.data, (a, b), _backward)

    def scale(self, x: Value, factor: float) -> Value:
        factor_arr = np.asarray(factor, dtype=x.dtype)

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (g * factor_arr,)

        return self._emit("scale", x.data * factor_arr, (x,), _backward)

    def sum(self, x: Value) -> Value:
        shape = x.shape

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (np.full(shape, g, dtype=x.dtype),)

        return self._emit("sum", np.asarray(x.data.sum(), dtype=x.dtype), (x,), _backward)

    def mse(self, pred: Value, target: np.ndarray) -> Value:
        """Средний квадрат разности с константной целью."""
        if pred.shape != target.shape:
            raise ShapeError(f"mse: формы не совпадают {pred.shape} vs {target.shape}")
        diff = pred.data - target.astype(pred.dtype, copy=False)
        size = diff.size

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (diff * (g * 2 / size),)

        return self._emit("mse", np.asarray(np.mean(diff * diff), dtype=pred.dtype), (pred,), _backward)

    def mean_abs(self, x: Value) -> Value:
        """Среднее |x| (L1-штраф на активации)."""
        size = x.data.size

        def _backward(g: np.ndarray, needs: tuple[bool, ...]):
            return (np.sign(x.data) * (g / size),)

        return self._emit("mean_abs", np.asarray(np.mean(np.abs(x.data)), dtype=x.dtype), (x,), _backward)


# =============================================================================
# Обратный проход
# =============================================================================


def backward(tape: GradTape, loss: Value) -> dict[str, np.ndarray]:
    """Прогоняет ленту в обратном порядке и возвращает ∂loss/∂θ для всех обучаемых листьев."""
    if not tape.enabled:
        raise ContractError("backward: лента создана с enabled=False")
    if loss.data.size != 1:
        raise ContractError(f"backward: лосс должен быть скаляром, получена форма {loss.shape}")

    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for record in reversed(tape._records):
        g = grads.pop(record.output_id, None)
        if g is None:
            continue
        needs = tuple(input_id in tape._needs_grad for input_id in record.input_ids)
        input_grads = record.backward(g, needs)
        for input_id, need, input_grad in zip(record.input_ids, needs, input_grads):
            if not need or input_grad is None:
                continue
            previous = grads.get(input_id)
            grads[input_id] = input_grad if previous is None else previous + input_grad

    result: dict[str, np.ndarray] = {}
    for value_id, (name, value) in tape._trainable.items():
        grad = grads.get(value_id)
        result[name] = np.zeros_like(value.data) if grad is None else grad.reshape(value.shape)
    return result


# =============================================================================
# Проверка градиентов центральными разностями
# =============================================================================


@dataclass(frozen=True)
class GradCheckResult:
    """Итог сверки одного тензора."""

    max_relative_error: float
    checked: int
    sampled: int


def relative_error(analytic: np.ndarray, numeric: np.ndarray, *, scale: float = 0.0) -> float:
    """max|a − n| / max(max|a|, max|n|, scale, 1e-8)."""
    if analytic.size == 0:
        return 0.0
    denom = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), scale, 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / denom


def central_difference_grad(
    probe: Callable[[], tuple[float, bytes]],
    array: np.ndarray,
    indices: Sequence[int],
    *,
    step: float = GRAD_CHECK_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """Численный градиент по выбранным координатам `array` (правится на месте и восстанавливается).

    `probe()` пересчитывает лосс и возвращает (loss, activation_signature).
    Вторая часть результата — флаги координат, где ± шаг не сменил ни одной маски ReLU.
    """
    if not array.flags.c_contiguous:
        raise ContractError("central_difference_grad: массив должен быть непрерывным")
    flat = array.reshape(-1)
    _, base_signature = probe()
    numeric = np.empty(len(indices), dtype=np.float64)
    smooth = np.empty(len(indices), dtype=bool)
    for pos, idx in enumerate(indices):
        original = flat[idx]
        flat[idx] = original + step
        f_plus, s_plus = probe()
        flat[idx] = original - step
        f_minus, s_minus = probe()
        flat[idx] = original
        numeric[pos] = (f_plus - f_minus) / (2 * step)
        smooth[pos] = s_plus == base_signature and s_minus == base_signature
    return numeric, smooth


def check_gradients(
    build_loss: Callable[[GradTape, dict[str, Value]], Value],
    arrays: dict[str, np.ndarray],
    *,
    samples_per_tensor: int = 16,
    seed: int = 0,
    step: float = GRAD_CHECK_STEP,
) -> dict[str, GradCheckResult]:
    """Сверяет backward() с центральными разностями по случайной выборке координат каждого тензора.

    `build_loss(tape, leaves)` строит скалярный лосс из листьев с именами ключей `arrays`.
    """

    def _run(enabled: bool) -> tuple[GradTape, Value]:
        tape = GradTape(enabled=enabled, threads=1)
        leaves = {name: tape.leaf(arr, name=name, trainable=True) for name, arr in arrays.items()}
        return tape, build_loss(tape, leaves)

    tape, loss = _run(True)
    analytic = backward(tape, loss)

    def _probe() -> tuple[float, bytes]:
        probe_tape, probe_loss = _run(False)
        return float(probe_loss.data), probe_tape.activation_signature()

    rng = np.random.default_rng(seed)
    results: dict[str, GradCheckResult] = {}
    for name, arr in arrays.items():
        count = min(int(samples_per_tensor), arr.size)
        indices = np.sort(rng.choice(arr.size, size=count, replace=False))
        numeric, smooth = central_difference_grad(_probe, arr, indices, step=step)
        full_grad = analytic[name]
        picked = full_grad.reshape(-1)[indices].astype(np.float64)
        error = relative_error(
            picked[smooth],
            numeric[smooth],
            scale=float(np.max(np.abs(full_grad))) if full_grad.size else 0.0,
        )
        results[name] = GradCheckResult(max_relative_error=error, checked=int(smooth.sum()), sampled=count)
    return results
