"""Командная строка dAUTOMAP.

Примеры:
  python3 -m scripts.cli gen-data --count 200 --size 32 --seed 0 --out data/train.dset
  python3 -m scripts.cli make-mask --pattern cartesian --af 2 --size 32 --seed 7 --out data/mask.dmsk
  python3 -m scripts.cli train --data data/train.dset --mask data/mask.dmsk --epochs 200 --out runs/exp1
  python3 -m scripts.cli eval --checkpoint runs/exp1/final --data data/test.dset --mask data/mask.dmsk --out runs/exp1/report
  python3 -m scripts.cli reconstruct --checkpoint runs/exp1/final --data data/test.dset --mask data/mask.dmsk --index 3 --out runs/exp1/images
  python3 -m scripts.cli params --size 128 --size 256
  python3 -m scripts.cli dft-check --max-size 32
  python3 -m scripts.cli bench --size 128 --size 256 --runs 50
  python3 -m scripts.cli pipeline --out runs/repro --epochs 5

Коды выхода: 0 — успех, 1 — ошибка выполнения, 2 — неверные аргументы.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError

from config import (
    BENCH_RUNS,
    BENCH_WARMUP_RUNS,
    CLI_DEFAULT_COUNT,
    CLI_DEFAULT_SIZE,
    CLI_DEFAULT_SIZES,
    KSPACE_SCALE,
    L1_ACTIVITY_WEIGHT,
    NUM_THREADS,
    TRAIN_BATCH_SIZE,
    TRAIN_EPOCHS,
    TRAIN_EVAL_EVERY,
    logger,
)
from services.data import gen_phantoms, read_dataset, write_dataset
from services.dft_check import run_dft_check
from services.errors import DautomapError
from services.model import (
    ModelSpec,
    automap_param_count,
    dautomap_param_count,
    init_params,
    param_memory_bytes,
)
from services.pipeline import PipelineConfig, PipelineResult, run_pipeline
from services.report_generator import save_report
from services.sampling import load_mask, make_mask, save_mask
from services.trainer import TrainConfig, benchmark, evaluate, load_checkpoint, reconstruct, train
from utils.image_io import error_map, save_pgm, to_uint8


class ResolvedCommand(BaseModel):
    """Подкоманда и все её флаги после подстановки значений по умолчанию."""

    command: str = Field(..., description="Подкоманда")
    options: dict = Field(default_factory=dict, description="Флаги")


def _print_resolved(args: argparse.Namespace) -> None:
    options = {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in sorted(vars(args).items())
        if key not in ("command", "handler")
    }
    print("=== CONFIG ===")
    print(ResolvedCommand(command=args.command, options=options).model_dump_json(indent=2))


# =============================================================================
# Подкоманды
# =============================================================================


def _cmd_gen_data(args: argparse.Namespace) -> int:
    cols = args.cols or args.size
    dataset = gen_phantoms(args.count, args.size, cols, args.seed, threads=args.threads)
    path = write_dataset(dataset, args.out)
    print("\n=== GEN-DATA RESULT ===")
    print("COUNT:", dataset.count)
    print("SHAPE:", f"{args.size}x{cols}")
    print("SEED:", args.seed)
    print("DATASET:", path)
    return 0


def _cmd_make_mask(args: argparse.Namespace) -> int:
    cols = args.cols or args.size
    mask = make_mask(args.pattern, args.size, cols, args.af, args.seed)
    path = save_mask(mask, args.out)
    print("\n=== MAKE-MASK RESULT ===")
    print("PATTERN:", mask.pattern)
    print("AF:", mask.af)
    print("TARGET_FRACTION:", f"{1.0 / mask.af:.4f}")
    print("ACHIEVED_FRACTION:", f"{mask.achieved_fraction:.4f}")
    if mask.radius is not None:
        print("RADIUS:", f"{mask.radius:.4f}")
    print("MASK:", path)
    return 0


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        model=args.model,
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        lr=args.lr,
        l1_activity_weight=args.l1_weight,
        seed=args.seed,
        precision=args.precision,
        eval_every=args.eval_every,
        output_dir=str(args.out),
        final_conj=not args.no_final_conj,
        kspace_scale=args.kspace_scale,
        max_grad_norm=args.max_grad_norm,
        per_sample_masks=args.per_sample_masks,
        threads=args.threads,
    )


def _cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    print("=== TRAIN CONFIG ===")
    print(config.model_dump_json(indent=2))
    dataset = read_dataset(args.data)
    mask = load_mask(args.mask)
    result = train(config, dataset, mask, resume_from=args.resume)
    print("\n=== TRAIN RESULT ===")
    print("EPOCHS:", len(result.loss_history))
    print("INITIAL_LOSS:", f"{result.loss_history[0]:.6e}")
    print("FINAL_LOSS:", f"{result.loss_history[-1]:.6e}")
    print("CHECKPOINT:", result.final_dir)
    print("DURATION:", f"{result.duration:.2f}s")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    dataset = read_dataset(args.data)
    mask = load_mask(args.mask)
    report = evaluate(args.checkpoint, dataset, mask, compare_with=args.compare, threads=args.threads)
    paths = save_report(report, args.out)
    wilcoxon = report.wilcoxon_vs_zero_filled
    print("\n=== EVAL RESULT ===")
    print("COUNT:", report.count)
    for name in ("psnr", "ssim", "hfen", "mse"):
        model, baseline = report.model.summary[name], report.zero_filled.summary[name]
        print(f"{name.upper()}: model {model.mean:.6g} ± {model.std:.6g} | zero-filled {baseline.mean:.6g} ± {baseline.std:.6g}")
    print("PSNR_GAIN_DB:", f"{report.psnr_gain_db:.4f}")
    print("WILCOXON_P:", f"{wilcoxon.p_value:.3e}" if wilcoxon is not None else "undefined")
    if report.comparison is not None:
        other = report.wilcoxon_vs_comparison
        print("COMPARISON_PSNR:", f"{report.comparison.summary['psnr'].mean:.6g} ({report.comparison_kind})")
        print("WILCOXON_P_COMPARISON:", f"{other.p_value:.3e}" if other is not None else "undefined")
    print("REPORT:", paths.text)
    print("REPORT_JSON:", paths.json)
    print("REPORT_XLSX:", paths.excel)
    return 0


def _cmd_reconstruct(args: argparse.Namespace) -> int:
    dataset = read_dataset(args.data)
    mask = load_mask(args.mask)
    recon = reconstruct(args.checkpoint, dataset, mask, args.index, threads=args.threads)
    out_dir = Path(args.out)
    err_pixels, err_scale = error_map(recon.prediction, recon.target)
    zf_pixels, zf_scale = error_map(recon.zero_filled, recon.target)
    paths = {
        "RECONSTRUCTION": save_pgm(to_uint8(recon.prediction), out_dir / f"reconstruction_{args.index:04d}.pgm"),
        "TARGET": save_pgm(to_uint8(recon.target), out_dir / f"target_{args.index:04d}.pgm"),
        "ZERO_FILLED": save_pgm(to_uint8(recon.zero_filled), out_dir / f"zero_filled_{args.index:04d}.pgm"),
        "ERROR_MAP": save_pgm(err_pixels, out_dir / f"error_{args.index:04d}.pgm"),
        "ERROR_MAP_ZERO_FILLED": save_pgm(zf_pixels, out_dir / f"error_zero_filled_{args.index:04d}.pgm"),
    }
    print("\n=== RECONSTRUCT RESULT ===")
    print("INDEX:", args.index)
    print("ERROR_MAP_MAX:", repr(err_scale))
    print("ERROR_MAP_ZERO_FILLED_MAX:", repr(zf_scale))
    for key, path in paths.items():
        print(f"{key}:", path)
    return 0


def _cmd_params(args: argparse.Namespace) -> int:
    sizes = args.size or list(CLI_DEFAULT_SIZES)
    print("\n=== PARAMS RESULT ===")
    print(f"{'SIZE':>6} {'DAUTOMAP':>14} {'DAUTOMAP_MB':>12} {'AUTOMAP':>18} {'AUTOMAP_MB':>14} {'RATIO':>10}")
    for size in sizes:
        d_count = dautomap_param_count(size, size)
        a_count = automap_param_count(size)
        print(
            f"{size:>6} {d_count:>14,} {param_memory_bytes(d_count) / 2**20:>12.2f} "
            f"{a_count:>18,} {param_memory_bytes(a_count) / 2**20:>14.1f} {a_count / d_count:>10.1f}"
        )
    return 0


def _cmd_dft_check(args: argparse.Namespace) -> int:
    result = run_dft_check(max_size=args.max_size, seed=args.seed)
    print("\n=== DFT-CHECK RESULT ===")
    for entry in result.entries:
        print(f"{entry.n:>3}x{entry.m:<3} forward {entry.forward_error:.3e}  inverse {entry.inverse_error:.3e}")
    print("RIGHT_FACTOR:", result.right_factor, result.right_factor_errors)
    print("MAX_ABS_ERROR:", f"{result.max_error:.3e}")
    if result.passed:
        print(f"PASSED: max abs error < {result.tolerance:g}")
        return 0
    print(f"FAILED: max abs error {result.max_error:.3e} >= {result.tolerance:g}")
    return 1


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.checkpoint:
        models = [load_checkpoint(args.checkpoint).params]
    else:
        sizes = args.size or list(CLI_DEFAULT_SIZES)
        models = [init_params(ModelSpec(kind=args.model, n=size, m=size), args.seed) for size in sizes]
    print("\n=== BENCH RESULT ===")
    for params in models:
        result = benchmark(params, n_runs=args.runs, warmup_runs=args.warmup, seed=args.seed, threads=args.threads)
        print(
            f"{result.model_kind} {result.n}x{result.m}: {result.mean_ms:.3f} ± {result.std_ms:.3f} ms "
            f"({result.runs} runs, {result.param_count:,} params)"
        )
    return 0


def _print_pipeline_result(result: PipelineResult) -> None:
    print("\n" + "=" * 60)
    print("РЕЗУЛЬТАТ ПАЙПЛАЙНА")
    print("=" * 60)
    print(f"Папка артефактов: {result.pipeline_dir}")
    if result.data:
        print(f"[1] Data: {result.data.train_count}+{result.data.test_count} фантомов — {result.data.duration:.2f}с")
    if result.mask:
        print(f"[2] Mask: доля {result.mask.achieved_fraction:.4f} — {result.mask.duration:.2f}с")
    if result.training:
        print(
            f"[3] Train: {result.training.epochs} эпох, loss {result.training.initial_loss:.4e} → "
            f"{result.training.final_loss:.4e} — {result.training.duration:.2f}с"
        )
    if result.evaluation:
        print(
            f"[4] Eval: PSNR {result.evaluation.model_psnr:.2f} dB vs zero-filled "
            f"{result.evaluation.zero_filled_psnr:.2f} dB, p={result.evaluation.p_value} — {result.evaluation.duration:.2f}с"
        )
        print(f"\n>>> ОТЧЁТ: {result.evaluation.report_paths.text}")
    print(f"\nОбщее время: {result.total_duration:.2f}с")
    if result.errors:
        print("\n--- ОШИБКИ ---")
        for err in result.errors:
            print(f"  ! {err}")


def _cmd_pipeline(args: argparse.Namespace) -> int:
    train_config = TrainConfig(
        model=args.model,
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        lr=args.lr,
        l1_activity_weight=args.l1_weight,
        seed=args.seed,
        eval_every=args.eval_every,
        kspace_scale=args.kspace_scale,
        threads=args.threads,
    )
    config = PipelineConfig(
        size=args.size,
        train_count=args.train_count,
        test_count=args.test_count,
        data_seed=args.data_seed,
        pattern=args.pattern,
        af=args.af,
        mask_seed=args.mask_seed,
        train=train_config,
        threads=args.threads,
    )
    result = run_pipeline(config, Path(args.out))
    _print_pipeline_result(result)
    return 1 if result.errors else 0


# =============================================================================
# Аргументы
# =============================================================================


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=["dautomap", "automap"], default="dautomap", help="Модель (default: dautomap)")
    parser.add_argument("--epochs", type=int, default=TRAIN_EPOCHS, help=f"Эпохи (default: {TRAIN_EPOCHS})")
    parser.add_argument("--batch-size", type=int, default=TRAIN_BATCH_SIZE, help=f"Батч (default: {TRAIN_BATCH_SIZE})")
    parser.add_argument("--optimizer", choices=["adam", "rmsprop"], default=None, help="По умолчанию: adam/rmsprop по модели")
    parser.add_argument("--lr", type=float, default=None, help="Learning rate (default: по оптимизатору)")
    parser.add_argument("--l1-weight", type=float, default=L1_ACTIVITY_WEIGHT, help="Вес L1 активаций")
    parser.add_argument("--seed", type=int, default=0, help="Seed обучения")
    parser.add_argument("--eval-every", type=int, default=TRAIN_EVAL_EVERY, help="Чекпойнт каждые N эпох")
    parser.add_argument("--kspace-scale", type=float, default=KSPACE_SCALE, help="Множитель k-space")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dautomap", description="dAUTOMAP: обучаемое разделимое преобразование для МРТ.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Синтетические фантомы")
    p.add_argument("--count", type=int, default=CLI_DEFAULT_COUNT, help="Число изображений")
    p.add_argument("--size", type=int, default=CLI_DEFAULT_SIZE, help="Строки N")
    p.add_argument("--cols", type=int, default=None, help="Столбцы M (default: = N)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=NUM_THREADS)
    p.add_argument("--out", type=Path, required=True, help="Файл датасета")
    p.set_defaults(handler=_cmd_gen_data)

    p = sub.add_parser("make-mask", help="Маска undersampling")
    p.add_argument("--pattern", choices=["cartesian", "poisson", "vdp"], required=True)
    p.add_argument("--af", type=float, required=True, help="Фактор ускорения")
    p.add_argument("--size", type=int, default=CLI_DEFAULT_SIZE, help="Строки N")
    p.add_argument("--cols", type=int, default=None, help="Столбцы M (default: = N)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="Файл маски")
    p.set_defaults(handler=_cmd_make_mask)

    p = sub.add_parser("train", help="Обучение")
    p.add_argument("--data", type=Path, required=True, help="Файл датасета")
    p.add_argument("--mask", type=Path, required=True, help="Файл маски")
    _add_train_flags(p)
    p.add_argument("--precision", choices=["float32", "float64"], default="float32")
    p.add_argument("--max-grad-norm", type=float, default=None, help="Клип нормы градиента")
    p.add_argument("--per-sample-masks", action="store_true", help="Своя маска для каждого изображения")
    p.add_argument("--no-final-conj", action="store_true", help="Без внешнего сопряжения в DT-блоке")
    p.add_argument("--resume", type=Path, default=None, help="Папка чекпойнта для продолжения")
    p.add_argument("--threads", type=int, default=NUM_THREADS)
    p.add_argument("--out", type=Path, required=True, help="Папка результатов обучения")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="Метрики модели и zero-filled бейзлайна")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--compare", type=Path, default=None, help="Второй чекпойнт для сравнения")
    p.add_argument("--threads", type=int, default=NUM_THREADS)
    p.add_argument("--out", type=Path, required=True, help="Папка отчёта")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("reconstruct", help="Реконструкция и карта ошибок (PGM)")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--index", type=int, default=0, help="Номер изображения в датасете")
    p.add_argument("--threads", type=int, default=NUM_THREADS)
    p.add_argument("--out", type=Path, required=True, help="Папка изображений")
    p.set_defaults(handler=_cmd_reconstruct)

    p = sub.add_parser("params", help="Число параметров dAUTOMAP и AUTOMAP")
    p.add_argument("--size", type=int, action="append", default=None, help="Сторона сетки (можно несколько)")
    p.set_defaults(handler=_cmd_params)

    p = sub.add_parser("dft-check", help="Точность DT-блока против эталонного DFT")
    p.add_argument("--max-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_dft_check)

    p = sub.add_parser("bench", help="Время инференса")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--model", choices=["dautomap", "automap"], default="dautomap")
    p.add_argument("--size", type=int, action="append", default=None)
    p.add_argument("--runs", type=int, default=BENCH_RUNS)
    p.add_argument("--warmup", type=int, default=BENCH_WARMUP_RUNS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=NUM_THREADS)
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("pipeline", help="gen-data → make-mask → train → eval")
    p.add_argument("--size", type=int, default=CLI_DEFAULT_SIZE)
    p.add_argument("--train-count", type=int, default=CLI_DEFAULT_COUNT)
    p.add_argument("--test-count", type=int, default=40)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--pattern", choices=["cartesian", "poisson", "vdp"], default="cartesian")
    p.add_argument("--af", type=float, default=2.0)
    p.add_argument("--mask-seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("--threads", type=int, default=NUM_THREADS)
    p.add_argument("--out", type=Path, required=True, help="Папка прогона")
    p.set_defaults(handler=_cmd_pipeline)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse: --help → 0, ошибка разбора → 2
        return int(e.code) if isinstance(e.code, int) else 2

    _print_resolved(args)
    try:
        return args.handler(args)
    except (DautomapError, OSError, ValidationError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"ERROR: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        logger.warning("Остановлено пользователем (Ctrl+C).")
        return 130


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
