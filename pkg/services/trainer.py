"""Обучение, чекпойнты, оценка и замер скорости.

Выходная папка обучения:
    <output_dir>/
        train_config.json
        loss_history.csv            # epoch,loss
        checkpoints/epoch_XXXX/     # каждые eval_every эпох (и эпоха 0)
        final/                      # после последней эпохи

Чекпойнт — папка с двумя файлами:
    manifest.json — модель, конфиг, эпоха, имена/формы/смещения тензоров,
                    состояние оптимизатора и RNG перемешивания, история лосса, sha256 блоба
    tensors.bin   — little-endian float32 (или float64) подряд: веса, затем буферы оптимизатора

Публичный API:
    - TrainConfig, Checkpoint, TrainResult
    - save_checkpoint(), load_checkpoint(), checkpoint_hash()
    - train()
    - evaluate() → EvaluationReport, reconstruct()
    - benchmark() → BenchmarkResult
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import (
    BENCH_RUNS,
    BENCH_WARMUP_RUNS,
    CHECKPOINT_BLOB_NAME,
    CHECKPOINT_FORMAT_VERSION,
    CHECKPOINT_MANIFEST_NAME,
    DT_FINAL_CONJ,
    KSPACE_SCALE,
    L1_ACTIVITY_WEIGHT,
    NUM_THREADS,
    TRAIN_BATCH_SIZE,
    TRAIN_DTYPE,
    TRAIN_EPOCHS,
    TRAIN_EVAL_EVERY,
    logger,
)
from services.data import Dataset, build_training_arrays, zero_filled
from services.errors import (
    ConfigurationError,
    DegenerateError,
    FormatError,
    MetricUndefinedError,
    ShapeError,
    TrainingError,
)
from services.metrics import MetricReport, RunningStats, WilcoxonResult, evaluate_images, wilcoxon_signed_rank
from services.model import ModelKind, ModelParams, ModelSpec, build_forward, forward, init_params
from services.numerics import GradTape, backward
from services.optim import (
    DEFAULT_LR,
    OptimizerKind,
    OptimizerState,
    clip_grad_norm,
    init_optimizer_state,
    optimizer_step,
)
from services.sampling import SamplingMask
from utils.rng import make_rng

# оптимизатор по умолчанию для каждой модели
DEFAULT_OPTIMIZER: dict[str, str] = {"dautomap": "adam", "automap": "rmsprop"}

# поля конфига, не влияющие на результат (в манифест не пишутся)
_NON_PROVENANCE_FIELDS = {"output_dir", "threads"}


# =============================================================================
# Конфигурация
# =============================================================================


class TrainConfig(BaseModel):
    """Параметры обучения (сохраняются рядом с чекпойнтами)."""

    model: ModelKind = Field("dautomap", description="dautomap или automap (маленький бейзлайн)")
    epochs: int = Field(TRAIN_EPOCHS, ge=1, description="Число эпох")
    batch_size: int = Field(TRAIN_BATCH_SIZE, ge=1, description="Размер мини-батча")
    optimizer: OptimizerKind | None = Field(None, description="adam/rmsprop; по умолчанию зависит от модели")
    lr: float | None = Field(None, ge=0, description="Learning rate; по умолчанию зависит от оптимизатора")
    loss: Literal["mse"] = Field("mse", description="Основной лосс")
    l1_activity_weight: float = Field(L1_ACTIVITY_WEIGHT, ge=0, description="Вес L1-штрафа на активации автоэнкодера")
    seed: int = Field(0, ge=0, description="Seed инициализации и перемешивания")
    precision: Literal["float32", "float64"] = Field(TRAIN_DTYPE, description="Точность весов и данных")
    eval_every: int = Field(TRAIN_EVAL_EVERY, ge=1, description="Чекпойнт каждые N эпох")
    output_dir: str = Field("artifacts/train", description="Папка результатов")
    final_conj: bool = Field(DT_FINAL_CONJ, description="Внешнее сопряжение в конце DT-блока")
    kspace_scale: float = Field(KSPACE_SCALE, gt=0, description="Множитель входного k-space")
    max_grad_norm: float | None = Field(None, gt=0, description="Клип глобальной нормы градиента (None = выкл)")
    per_sample_masks: bool = Field(False, description="Своя маска для каждого изображения")
    threads: int = Field(NUM_THREADS, ge=1, description="Рабочие потоки свёрток и данных")

    @model_validator(mode="after")
    def _resolve_defaults(self) -> "TrainConfig":
        if self.optimizer is None:
            self.optimizer = DEFAULT_OPTIMIZER[self.model]
        if self.lr is None:
            self.lr = DEFAULT_LR[self.optimizer]
        return self

    def provenance(self) -> dict:
        """Поля, определяющие результат обучения."""
        return self.model_dump(mode="json", exclude=_NON_PROVENANCE_FIELDS)


# =============================================================================
# Чекпойнт
# =============================================================================


class TensorEntry(BaseModel):
    name: str = Field(..., description="Имя тензора")
    shape: list[int] = Field(..., description="Форма")
    offset: int = Field(..., ge=0, description="Смещение в tensors.bin (байты)")


class OptimizerManifest(BaseModel):
    kind: OptimizerKind
    hyperparameters: dict[str, float] = Field(default_factory=dict)
    step: int = Field(0, ge=0)
    tensors: list[TensorEntry] = Field(default_factory=list)


class CheckpointManifest(BaseModel):
    format_version: int = Field(CHECKPOINT_FORMAT_VERSION)
    model: ModelSpec
    config: dict = Field(default_factory=dict, description="TrainConfig без output_dir/threads")
    dtype: Literal["float32", "float64"]
    epoch: int = Field(0, ge=0)
    tensors: list[TensorEntry]
    optimizer: OptimizerManifest | None = None
    rng_state: dict | None = Field(None, description="Состояние PCG64 потока перемешивания")
    loss_history: list[float] = Field(default_factory=list)
    blob_size: int = Field(..., ge=0)
    blob_sha256: str


@dataclass
class Checkpoint:
    params: ModelParams
    config: TrainConfig
    epoch: int = 0
    optimizer: OptimizerState | None = None
    rng_state: dict | None = None
    loss_history: list[float] = field(default_factory=list)
    path: Path | None = None


def save_checkpoint(checkpoint: Checkpoint, directory: str | Path) -> Path:
    """Пишет manifest.json и tensors.bin в папку `directory`."""
    out_dir = Path(directory).expanduser().resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    dtype_name = np.dtype(checkpoint.params.dtype).name
    wire_dtype = np.dtype(dtype_name).newbyteorder("<")

    chunks: list[bytes] = []
    offset = 0

    def _append(name: str, arr: np.ndarray) -> TensorEntry:
        nonlocal offset
        data = np.ascontiguousarray(arr, dtype=wire_dtype).tobytes()
        entry = TensorEntry(name=name, shape=list(arr.shape), offset=offset)
        chunks.append(data)
        offset += len(data)
        return entry

    tensor_entries = [_append(name, arr) for name, arr in checkpoint.params.tensors.items()]
    optimizer_manifest = None
    if checkpoint.optimizer is not None:
        opt = checkpoint.optimizer
        optimizer_manifest = OptimizerManifest(
            kind=opt.kind,
            hyperparameters=opt.hyperparameters(),
            step=opt.step,
            tensors=[_append(name, arr) for name, arr in opt.named_buffers()],
        )

    blob = b"".join(chunks)
    manifest = CheckpointManifest(
        model=checkpoint.params.spec,
        config=checkpoint.config.provenance(),
        dtype=dtype_name,
        epoch=checkpoint.epoch,
        tensors=tensor_entries,
        optimizer=optimizer_manifest,
        rng_state=checkpoint.rng_state,
        loss_history=list(checkpoint.loss_history),
        blob_size=len(blob),
        blob_sha256=hashlib.sha256(blob).hexdigest(),
    )

    (out_dir / CHECKPOINT_BLOB_NAME).write_bytes(blob)
    (out_dir / CHECKPOINT_MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    checkpoint.path = out_dir
    logger.debug("Чекпойнт сохранён: %s (эпоха %d, %d байт)", out_dir, checkpoint.epoch, len(blob))
    return out_dir


def _read_tensor(blob: bytes, entry: TensorEntry, wire_dtype: np.dtype, native: np.dtype) -> np.ndarray:
    count = int(np.prod(entry.shape, dtype=np.int64))
    end = entry.offset + count * wire_dtype.itemsize
    if end > len(blob):
        raise FormatError(f"Тензор {entry.name} выходит за пределы tensors.bin", offset=entry.offset)
    arr = np.frombuffer(blob, dtype=wire_dtype, count=count, offset=entry.offset)
    return arr.reshape(entry.shape).astype(native)


def load_checkpoint(directory: str | Path) -> Checkpoint:
    ckpt_dir = Path(directory).expanduser().resolve()
    manifest_path = ckpt_dir / CHECKPOINT_MANIFEST_NAME
    blob_path = ckpt_dir / CHECKPOINT_BLOB_NAME
    try:
        manifest = CheckpointManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise FormatError(f"Некорректный {CHECKPOINT_MANIFEST_NAME}: {e.errors()[0]['msg']}", offset=0) from e
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(f"Неподдерживаемая версия чекпойнта: {manifest.format_version}", offset=0)

    blob = blob_path.read_bytes()
    if len(blob) != manifest.blob_size:
        raise FormatError(
            f"Размер tensors.bin {len(blob)} != {manifest.blob_size} из манифеста",
            offset=min(len(blob), manifest.blob_size),
        )
    if hashlib.sha256(blob).hexdigest() != manifest.blob_sha256:
        raise FormatError("sha256 tensors.bin не совпадает с манифестом", offset=0)

    native = np.dtype(manifest.dtype)
    wire_dtype = native.newbyteorder("<")
    tensors = {entry.name: _read_tensor(blob, entry, wire_dtype, native) for entry in manifest.tensors}
    params = ModelParams(spec=manifest.model, tensors=tensors)

    optimizer = None
    if manifest.optimizer is not None:
        opt_manifest = manifest.optimizer
        optimizer = OptimizerState(kind=opt_manifest.kind, step=opt_manifest.step, **opt_manifest.hyperparameters)
        for entry in opt_manifest.tensors:
            buffer, name = entry.name.split("/", 1)
            optimizer.buffers.setdefault(buffer, {})[name] = _read_tensor(blob, entry, wire_dtype, native)

    return Checkpoint(
        params=params,
        config=TrainConfig(**manifest.config),
        epoch=manifest.epoch,
        optimizer=optimizer,
        rng_state=manifest.rng_state,
        loss_history=list(manifest.loss_history),
        path=ckpt_dir,
    )


def checkpoint_hash(directory: str | Path) -> str:
    """sha256 от manifest.json и tensors.bin (для проверки воспроизводимости)."""
    ckpt_dir = Path(directory).expanduser().resolve()
    digest = hashlib.sha256()
    for name in (CHECKPOINT_MANIFEST_NAME, CHECKPOINT_BLOB_NAME):
        digest.update((ckpt_dir / name).read_bytes())
    return digest.hexdigest()


# =============================================================================
# Обучение
# =============================================================================


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    final_dir: Path
    loss_history: list[float]
    duration: float


def _write_loss_history(path: Path, history: list[float]) -> None:
    lines = ["epoch,loss"] + [f"{epoch},{loss!r}" for epoch, loss in enumerate(history, start=1)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _restore_rng(state: dict | None, seed: int) -> np.random.Generator:
    rng = make_rng(seed, "shuffle")
    if state is not None:
        rng.bit_generator.state = state
    return rng


def _batch_loss(tape: GradTape, params: ModelParams, inputs: np.ndarray, targets: np.ndarray, l1_weight: float):
    result = build_forward(tape, params, inputs)
    loss = tape.mse(result.output, targets)
    if l1_weight > 0:
        loss = tape.add(loss, tape.scale(tape.mean_abs(result.features), l1_weight))
    return loss


def train(
    config: TrainConfig,
    dataset: Dataset,
    mask: SamplingMask,
    *,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Мини-батчевое обучение: forward → MSE (+ L1 активаций) → backward → шаг оптимизатора."""
    start_time = time.perf_counter()
    out_dir = Path(config.output_dir).expanduser().resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "train_config.json").write_text(config.model_dump_json(indent=2), encoding="utf-8")

    n, m = mask.shape
    spec = ModelSpec(kind=config.model, n=n, m=m, final_conj=config.final_conj)
    arrays = build_training_arrays(
        dataset,
        mask,
        kspace_scale=config.kspace_scale,
        dtype=config.precision,
        per_sample_masks=config.per_sample_masks,
        threads=config.threads,
    )
    sample_count = len(arrays)

    if resume_from is not None:
        resumed = load_checkpoint(resume_from)
        if resumed.params.spec != spec:
            raise ConfigurationError(f"Чекпойнт {resume_from}: модель {resumed.params.spec} не совпадает с {spec}")
        if np.dtype(resumed.params.dtype).name != config.precision:
            raise ConfigurationError(f"Чекпойнт {resume_from}: dtype {resumed.params.dtype} != {config.precision}")
        if resumed.optimizer is None:
            raise ConfigurationError(f"Чекпойнт {resume_from} не содержит состояния оптимизатора")
        params, opt_state = resumed.params, resumed.optimizer
        rng = _restore_rng(resumed.rng_state, config.seed)
        history = list(resumed.loss_history)
        first_epoch = resumed.epoch + 1
        last_good: Path | None = resumed.path
        logger.info("Продолжение обучения с эпохи %d: %s", resumed.epoch, resumed.path)
    else:
        params = init_params(spec, config.seed, dtype=config.precision)
        opt_state = init_optimizer_state(config.optimizer, params.tensors, lr=config.lr)
        rng = _restore_rng(None, config.seed)
        history = []
        first_epoch = 1
        last_good = save_checkpoint(
            Checkpoint(params=params, config=config, epoch=0, optimizer=opt_state, rng_state=rng.bit_generator.state),
            out_dir / "checkpoints" / "epoch_0000",
        )

    logger.info(
        "Обучение %s %dx%d: %d изображений, эпохи %d..%d, batch=%d, %s lr=%g, l1=%g, dtype=%s, параметров=%d",
        config.model, n, m, sample_count, first_epoch, config.epochs, config.batch_size,
        config.optimizer, config.lr, config.l1_activity_weight, config.precision, params.param_count(),
    )

    for epoch in range(first_epoch, config.epochs + 1):
        epoch_start = time.perf_counter()
        order = rng.permutation(sample_count)
        weighted_loss = 0.0
        for begin in range(0, sample_count, config.batch_size):
            idx = order[begin : begin + config.batch_size]
            tape = GradTape(threads=config.threads)
            loss = _batch_loss(tape, params, arrays.inputs[idx], arrays.targets[idx], config.l1_activity_weight)
            loss_value = float(loss.data)
            if not math.isfinite(loss_value):
                raise TrainingError(
                    f"Нечисловой лосс на эпохе {epoch}: {loss_value}; последний чекпойнт {last_good}",
                    last_checkpoint=str(last_good) if last_good else None,
                )
            grads = backward(tape, loss)
            if config.max_grad_norm is not None:
                grads, _ = clip_grad_norm(grads, config.max_grad_norm)
            try:
                optimizer_step(params.tensors, grads, opt_state)
            except TrainingError as e:
                raise TrainingError(
                    f"{e}; последний чекпойнт {last_good}",
                    tensor=e.tensor,
                    last_checkpoint=str(last_good) if last_good else None,
                ) from e
            weighted_loss += loss_value * len(idx)

        epoch_loss = weighted_loss / sample_count
        history.append(epoch_loss)
        level = logger.info if epoch == first_epoch or epoch % config.eval_every == 0 or epoch == config.epochs else logger.debug
        level("Эпоха %d/%d: loss=%.6e (%.2f сек)", epoch, config.epochs, epoch_loss, time.perf_counter() - epoch_start)

        if epoch % config.eval_every == 0 and epoch != config.epochs:
            last_good = save_checkpoint(
                Checkpoint(
                    params=params,
                    config=config,
                    epoch=epoch,
                    optimizer=opt_state,
                    rng_state=rng.bit_generator.state,
                    loss_history=history,
                ),
                out_dir / "checkpoints" / f"epoch_{epoch:04d}",
            )
            _write_loss_history(out_dir / "loss_history.csv", history)

    final = Checkpoint(
        params=params,
        config=config,
        epoch=max(config.epochs, first_epoch - 1),
        optimizer=opt_state,
        rng_state=rng.bit_generator.state,
        loss_history=history,
    )
    final_dir = save_checkpoint(final, out_dir / "final")
    _write_loss_history(out_dir / "loss_history.csv", history)

    duration = time.perf_counter() - start_time
    logger.info(
        "Обучение завершено: %d эпох, loss %.6e → %.6e, чекпойнт %s (%.2f сек)",
        len(history), history[0] if history else math.nan, history[-1] if history else math.nan, final_dir, duration,
    )
    return TrainResult(checkpoint=final, final_dir=final_dir, loss_history=history, duration=duration)


# =============================================================================
# Оценка
# =============================================================================


class EvaluationReport(BaseModel):
    """Метрики модели и zero-filled бейзлайна на отложенном наборе."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    model_kind: str = Field(..., description="Вид модели")
    checkpoint_epoch: int = Field(..., description="Эпоха чекпойнта")
    count: int = Field(..., description="Число изображений")
    n: int
    m: int
    mask_pattern: str
    mask_af: float
    mask_fraction: float
    model: MetricReport
    zero_filled: MetricReport
    wilcoxon_vs_zero_filled: WilcoxonResult | None = Field(None, description="PSNR модели vs zero-filled")
    psnr_gain_db: float = Field(..., description="Средний PSNR модели минус zero-filled")
    comparison_kind: str | None = None
    comparison: MetricReport | None = None
    wilcoxon_vs_comparison: WilcoxonResult | None = Field(None, description="PSNR модели vs второй модели")


def _predict(params: ModelParams, inputs: np.ndarray, batch_size: int, threads: int | None) -> np.ndarray:
    outputs = [forward(inputs[i : i + batch_size], params, threads=threads) for i in range(0, inputs.shape[0], batch_size)]
    return np.concatenate(outputs)


def _safe_wilcoxon(a: list[float], b: list[float], label: str) -> WilcoxonResult | None:
    try:
        return wilcoxon_signed_rank(a, b)
    except (DegenerateError, MetricUndefinedError, ConfigurationError) as e:
        logger.warning("Wilcoxon (%s) не посчитан: %s", label, e)
        return None


def _as_checkpoint(checkpoint: "Checkpoint | str | Path") -> Checkpoint:
    return checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)


def _reconstruct_dataset(ckpt: Checkpoint, dataset: Dataset, mask: SamplingMask, threads: int | None):
    spec = ckpt.params.spec
    if (spec.n, spec.m) != mask.shape:
        raise ShapeError(f"Модель обучена для {spec.n}x{spec.m}, маска {mask.shape[0]}x{mask.shape[1]}")
    arrays = build_training_arrays(
        dataset,
        mask,
        kspace_scale=ckpt.config.kspace_scale,
        dtype=ckpt.params.dtype,
        threads=threads,
    )
    preds = _predict(ckpt.params, arrays.inputs, ckpt.config.batch_size, threads)
    return arrays, preds


def evaluate(
    checkpoint: "Checkpoint | str | Path",
    dataset: Dataset,
    mask: SamplingMask,
    *,
    compare_with: "Checkpoint | str | Path | None" = None,
    threads: int | None = None,
) -> EvaluationReport:
    """Метрики модели и zero-filled бейзлайна + Wilcoxon по рядам PSNR."""
    start_time = time.perf_counter()
    ckpt = _as_checkpoint(checkpoint)
    logger.info(
        "Оценка %s (эпоха %d): %d изображений, маска %s af=%.2f",
        ckpt.params.spec.kind, ckpt.epoch, dataset.count, mask.pattern, mask.af,
    )

    arrays, preds = _reconstruct_dataset(ckpt, dataset, mask, threads)
    targets = arrays.targets[:, 0]
    model_report = evaluate_images(preds[:, 0], targets, threads=threads)
    baseline = zero_filled(arrays.inputs, kspace_scale=ckpt.config.kspace_scale)
    baseline_report = evaluate_images(baseline[:, 0], targets, threads=threads)

    report = EvaluationReport(
        model_kind=ckpt.params.spec.kind,
        checkpoint_epoch=ckpt.epoch,
        count=dataset.count,
        n=mask.shape[0],
        m=mask.shape[1],
        mask_pattern=mask.pattern,
        mask_af=mask.af,
        mask_fraction=mask.achieved_fraction,
        model=model_report,
        zero_filled=baseline_report,
        wilcoxon_vs_zero_filled=_safe_wilcoxon(model_report.psnr, baseline_report.psnr, "zero-filled"),
        psnr_gain_db=model_report.summary["psnr"].mean - baseline_report.summary["psnr"].mean,
    )

    if compare_with is not None:
        other = _as_checkpoint(compare_with)
        _, other_preds = _reconstruct_dataset(other, dataset, mask, threads)
        report.comparison_kind = other.params.spec.kind
        report.comparison = evaluate_images(other_preds[:, 0], targets, threads=threads)
        report.wilcoxon_vs_comparison = _safe_wilcoxon(model_report.psnr, report.comparison.psnr, "comparison")

    logger.info(
        "Оценка завершена: PSNR модели %.2f dB, zero-filled %.2f dB, выигрыш %.2f dB (%.2f сек)",
        model_report.summary["psnr"].mean,
        baseline_report.summary["psnr"].mean,
        report.psnr_gain_db,
        time.perf_counter() - start_time,
    )
    return report


@dataclass
class Reconstruction:
    """Одно изображение: выход модели, эталон и zero-filled, все (N, M)."""

    prediction: np.ndarray
    target: np.ndarray
    zero_filled: np.ndarray


def reconstruct(
    checkpoint: "Checkpoint | str | Path",
    dataset: Dataset,
    mask: SamplingMask,
    index: int = 0,
    *,
    threads: int | None = None,
) -> Reconstruction:
    if not 0 <= index < dataset.count:
        raise ConfigurationError(f"Индекс {index} вне датасета из {dataset.count} изображений")
    ckpt = _as_checkpoint(checkpoint)
    single = Dataset(images=dataset.images[index : index + 1], seed=dataset.seed)
    arrays, preds = _reconstruct_dataset(ckpt, single, mask, threads)
    baseline = zero_filled(arrays.inputs, kspace_scale=ckpt.config.kspace_scale)
    return Reconstruction(prediction=preds[0, 0], target=arrays.targets[0, 0], zero_filled=baseline[0, 0])


# =============================================================================
# Скорость инференса
# =============================================================================


class BenchmarkResult(BaseModel):
    model_kind: str
    n: int
    m: int
    param_count: int
    runs: int
    warmup_runs: int
    threads: int
    mean_ms: float = Field(..., description="Среднее время одного прохода (мс)")
    std_ms: float = Field(..., description="Стандартное отклонение (мс, ddof=0)")


def benchmark(
    params: ModelParams,
    *,
    n_runs: int = BENCH_RUNS,
    warmup_runs: int = BENCH_WARMUP_RUNS,
    seed: int = 0,
    threads: int | None = None,
) -> BenchmarkResult:
    """Время прямого прохода для одного изображения; прогревочные запуски не учитываются."""
    if n_runs < 1:
        raise ConfigurationError(f"n_runs должен быть ≥ 1, получено {n_runs}")
    if warmup_runs < 0:
        raise ConfigurationError(f"warmup_runs должен быть ≥ 0, получено {warmup_runs}")
    spec = params.spec
    rng = make_rng(seed, "bench")
    kspace = rng.standard_normal((1, 2, spec.n, spec.m)).astype(params.dtype)
    workers = max(1, int(NUM_THREADS if threads is None else threads))

    for _ in range(warmup_runs):
        forward(kspace, params, threads=workers)

    timings = RunningStats()
    for _ in range(n_runs):
        started = time.perf_counter()
        forward(kspace, params, threads=workers)
        timings.push((time.perf_counter() - started) * 1000.0)

    result = BenchmarkResult(
        model_kind=spec.kind,
        n=spec.n,
        m=spec.m,
        param_count=params.param_count(),
        runs=n_runs,
        warmup_runs=warmup_runs,
        threads=workers,
        mean_ms=timings.mean,
        std_ms=timings.std,
    )
    logger.info(
        "Бенчмарк %s %dx%d: %.3f ± %.3f мс (%d запусков, прогрев %d)",
        spec.kind, spec.n, spec.m, result.mean_ms, result.std_ms, n_runs, warmup_runs,
    )
    return result
