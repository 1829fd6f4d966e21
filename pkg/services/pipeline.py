"""Оркестратор полного прогона dAUTOMAP.

Шаги пайплайна:
    1. Data — синтетические фантомы (обучающий и тестовый наборы)
    2. Mask — маска undersampling'а
    3. Train — обучение модели
    4. Eval — метрики модели и zero-filled бейзлайна, отчёт

Раскладка папки:
    <pipeline_dir>/train.dset, test.dset, mask.dmsk
    <pipeline_dir>/train/      — выход trainer.train()
    <pipeline_dir>/report/     — report.txt, report.json, report.xlsx

Публичный API:
    - PipelineConfig — параметры прогона
    - ReconstructionPipeline — класс-оркестратор
    - run_pipeline() — запуск всех шагов
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from pydantic import BaseModel, Field

from config import NUM_THREADS, logger
from services.data import Dataset, gen_phantoms, write_dataset
from services.errors import DautomapError, PipelineError
from services.report_generator import ReportPaths, save_report
from services.sampling import MaskPattern, SamplingMask, make_mask, save_mask
from services.trainer import EvaluationReport, TrainConfig, TrainResult, evaluate, train
from utils.logging_utils import log_step_banner

TRAIN_DATASET_NAME = "train.dset"
TEST_DATASET_NAME = "test.dset"
MASK_FILE_NAME = "mask.dmsk"


class PipelineConfig(BaseModel):
    """Параметры сквозного прогона."""

    size: int = Field(32, ge=2, description="Сторона квадратной сетки N = M")
    train_count: int = Field(200, ge=1, description="Число обучающих фантомов")
    test_count: int = Field(40, ge=1, description="Число тестовых фантомов")
    data_seed: int = Field(0, ge=0, description="Seed обучающего набора (тестовый: data_seed + 1)")
    pattern: MaskPattern = Field("cartesian", description="Схема маски")
    af: float = Field(2.0, ge=1.0, description="Фактор ускорения")
    mask_seed: int = Field(0, ge=0, description="Seed маски")
    train: TrainConfig = Field(default_factory=TrainConfig, description="Параметры обучения")
    threads: int = Field(NUM_THREADS, ge=1, description="Рабочие потоки генерации данных и оценки")


# =============================================================================
# Метаданные шагов пайплайна
# =============================================================================


@dataclass
class DataMetadata:
    train_path: Path
    test_path: Path
    train_count: int
    test_count: int
    duration: float


@dataclass
class MaskMetadata:
    mask_path: Path
    achieved_fraction: float
    duration: float


@dataclass
class TrainMetadata:
    final_dir: Path
    epochs: int
    initial_loss: float
    final_loss: float
    duration: float


@dataclass
class EvalMetadata:
    report_paths: ReportPaths
    model_psnr: float
    zero_filled_psnr: float
    p_value: float | None
    duration: float


@dataclass
class PipelineResult:
    """Полный результат пайплайна."""

    pipeline_dir: Path
    total_duration: float = 0.0

    data: DataMetadata | None = None
    mask: MaskMetadata | None = None
    training: TrainMetadata | None = None
    evaluation: EvalMetadata | None = None
    report: EvaluationReport | None = None

    errors: list[str] = field(default_factory=list)


# =============================================================================
# Оркестратор пайплайна
# =============================================================================


class ReconstructionPipeline:
    """Оркестратор шагов: данные → маска → обучение → оценка."""

    def __init__(self, config: PipelineConfig, pipeline_dir: Path | None = None):
        self.config = config
        self.pipeline_dir = Path(pipeline_dir) if pipeline_dir else self._create_pipeline_dir()
        self.pipeline_dir.mkdir(parents=True, exist_ok=True)
        self.started_at = time.perf_counter()

        # данные между шагами
        self._train_set: Dataset | None = None
        self._test_set: Dataset | None = None
        self._mask: SamplingMask | None = None
        self._train_result: TrainResult | None = None
        self._report: EvaluationReport | None = None

        self._data_meta: DataMetadata | None = None
        self._mask_meta: MaskMetadata | None = None
        self._train_meta: TrainMetadata | None = None
        self._eval_meta: EvalMetadata | None = None

        self._errors: list[str] = []

    @staticmethod
    def _create_pipeline_dir() -> Path:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return Path("result") / timestamp

    # -------------------------------------------------------------------------
    # Шаг 1: Данные
    # -------------------------------------------------------------------------

    def generate_data(self) -> DataMetadata:
        log_step_banner(logger, "ШАГ 1: СИНТЕТИЧЕСКИЕ ФАНТОМЫ")
        cfg = self.config
        start = time.perf_counter()

        self._train_set = gen_phantoms(cfg.train_count, cfg.size, cfg.size, cfg.data_seed, threads=cfg.threads)
        self._test_set = gen_phantoms(cfg.test_count, cfg.size, cfg.size, cfg.data_seed + 1, threads=cfg.threads)
        train_path = write_dataset(self._train_set, self.pipeline_dir / TRAIN_DATASET_NAME)
        test_path = write_dataset(self._test_set, self.pipeline_dir / TEST_DATASET_NAME)

        meta = DataMetadata(
            train_path=train_path,
            test_path=test_path,
            train_count=cfg.train_count,
            test_count=cfg.test_count,
            duration=time.perf_counter() - start,
        )
        self._data_meta = meta
        logger.info("Фантомы: %d обучающих, %d тестовых за %.2f с", meta.train_count, meta.test_count, meta.duration)
        return meta

    # -------------------------------------------------------------------------
    # Шаг 2: Маска
    # -------------------------------------------------------------------------

    def generate_mask(self) -> MaskMetadata:
        log_step_banner(logger, "ШАГ 2: МАСКА UNDERSAMPLING")
        cfg = self.config
        start = time.perf_counter()

        self._mask = make_mask(cfg.pattern, cfg.size, cfg.size, cfg.af, cfg.mask_seed)
        mask_path = save_mask(self._mask, self.pipeline_dir / MASK_FILE_NAME)

        meta = MaskMetadata(
            mask_path=mask_path,
            achieved_fraction=self._mask.achieved_fraction,
            duration=time.perf_counter() - start,
        )
        self._mask_meta = meta
        logger.info("Маска %s af=%.2f: доля %.4f за %.2f с", cfg.pattern, cfg.af, meta.achieved_fraction, meta.duration)
        return meta

    # -------------------------------------------------------------------------
    # Шаг 3: Обучение
    # -------------------------------------------------------------------------

    def run_training(self) -> TrainMetadata:
        log_step_banner(logger, "ШАГ 3: ОБУЧЕНИЕ")
        if self._train_set is None or self._mask is None:
            raise PipelineError("Нет данных или маски. Сначала выполните generate_data() и generate_mask().")

        train_config = self.config.train.model_copy(update={"output_dir": str(self.pipeline_dir / "train")})
        result = train(train_config, self._train_set, self._mask)
        self._train_result = result

        meta = TrainMetadata(
            final_dir=result.final_dir,
            epochs=len(result.loss_history),
            initial_loss=result.loss_history[0],
            final_loss=result.loss_history[-1],
            duration=result.duration,
        )
        self._train_meta = meta
        logger.info(
            "Обучение: %d эпох, loss %.6e → %.6e за %.2f с",
            meta.epochs, meta.initial_loss, meta.final_loss, meta.duration,
        )
        return meta

    # -------------------------------------------------------------------------
    # Шаг 4: Оценка
    # -------------------------------------------------------------------------

    def run_evaluation(self) -> EvalMetadata:
        log_step_banner(logger, "ШАГ 4: ОЦЕНКА")
        if self._train_result is None or self._test_set is None or self._mask is None:
            raise PipelineError("Модель не обучена. Сначала выполните run_training().")
        start = time.perf_counter()

        report = evaluate(self._train_result.checkpoint, self._test_set, self._mask, threads=self.config.threads)
        paths = save_report(report, self.pipeline_dir / "report")
        self._report = report

        wilcoxon = report.wilcoxon_vs_zero_filled
        meta = EvalMetadata(
            report_paths=paths,
            model_psnr=report.model.summary["psnr"].mean,
            zero_filled_psnr=report.zero_filled.summary["psnr"].mean,
            p_value=wilcoxon.p_value if wilcoxon is not None else None,
            duration=time.perf_counter() - start,
        )
        self._eval_meta = meta
        logger.info(
            "PSNR: модель %.2f dB, zero-filled %.2f dB, p=%s за %.2f с",
            meta.model_psnr, meta.zero_filled_psnr, meta.p_value, meta.duration,
        )
        return meta

    # -------------------------------------------------------------------------
    # Запуск полного пайплайна
    # -------------------------------------------------------------------------

    def run(self) -> PipelineResult:
        log_step_banner(logger, "ЗАПУСК ПАЙПЛАЙНА dAUTOMAP")
        logger.info("Артефакты: %s", self.pipeline_dir)

        try:
            self.generate_data()
            self.generate_mask()
            self.run_training()
            self.run_evaluation()
        except DautomapError as e:
            self._errors.append(f"{type(e).__name__}: {e}")
            logger.error("Ошибка пайплайна: %s", e)
        except OSError as e:
            self._errors.append(f"Ошибка ввода-вывода: {e}")
            logger.error("Ошибка ввода-вывода: %s", e)

        total_duration = time.perf_counter() - self.started_at
        result = PipelineResult(
            pipeline_dir=self.pipeline_dir,
            total_duration=total_duration,
            data=self._data_meta,
            mask=self._mask_meta,
            training=self._train_meta,
            evaluation=self._eval_meta,
            report=self._report,
            errors=self._errors,
        )

        log_step_banner(logger, "ПАЙПЛАЙН ЗАВЕРШЁН")
        logger.info("Общее время: %.2f с", total_duration)
        if result.errors:
            logger.warning("Ошибки: %s", result.errors)
        return result


def run_pipeline(config: PipelineConfig, pipeline_dir: Path | None = None) -> PipelineResult:
    return ReconstructionPipeline(config, pipeline_dir).run()
