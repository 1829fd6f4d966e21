"""Сервис сохранения отчёта об оценке реконструкции.

Пишет три файла в папку отчёта:
    report.txt  — ключ: значение (читается глазами и diff'ом)
    report.json — EvaluationReport целиком (массивы по изображениям + агрегаты)
    report.xlsx — таблица метрик по изображениям и лист сводки

Публичный API:
    - report_to_text() — текстовое представление
    - generate_excel_report() — форматированный Excel
    - save_report() — все три файла
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

from config import logger
from services.metrics import METRIC_NAMES, MetricReport, WilcoxonResult
from services.trainer import EvaluationReport

REPORT_TEXT_NAME = "report.txt"
REPORT_JSON_NAME = "report.json"
REPORT_XLSX_NAME = "report.xlsx"


# =============================================================================
# Настройки стилей Excel
# =============================================================================

HEADER_FONT = Font(bold=True, size=11, color="FFFFFF")
HEADER_FILL = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
HEADER_ALIGNMENT = Alignment(horizontal="center", vertical="center", wrap_text=True)

DATA_ALIGNMENT_CENTER = Alignment(horizontal="center", vertical="top")

# изображения, где модель хуже zero-filled по PSNR
WORSE_FILL = PatternFill(start_color="FFF2CC", end_color="FFF2CC", fill_type="solid")

THIN_BORDER = Border(
    left=Side(style="thin"),
    right=Side(style="thin"),
    top=Side(style="thin"),
    bottom=Side(style="thin"),
)

COLUMN_WIDTHS = {
    "A": 6,    # №
    "B": 14,   # MSE
    "C": 12,   # PSNR
    "D": 10,   # SSIM
    "E": 12,   # HFEN
    "F": 14,   # MSE ZF
    "G": 12,   # PSNR ZF
    "H": 10,   # SSIM ZF
    "I": 12,   # HFEN ZF
}

HEADERS = [
    "№",
    "MSE",
    "PSNR, dB",
    "SSIM",
    "HFEN",
    "MSE (ZF)",
    "PSNR (ZF), dB",
    "SSIM (ZF)",
    "HFEN (ZF)",
]

SUMMARY_WIDTHS = {"A": 34, "B": 24}


# =============================================================================
# Текст
# =============================================================================


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    return repr(float(value))


def _metric_lines(prefix: str, report: MetricReport) -> list[str]:
    lines = []
    for name in METRIC_NAMES:
        summary = report.summary[name]
        lines.append(f"{prefix}.{name}.mean: {_fmt(summary.mean)}")
        lines.append(f"{prefix}.{name}.std: {_fmt(summary.std)}")
    return lines


def _wilcoxon_lines(prefix: str, result: WilcoxonResult | None) -> list[str]:
    if result is None:
        return [f"{prefix}: undefined"]
    return [
        f"{prefix}.statistic: {_fmt(result.statistic)}",
        f"{prefix}.p_value: {_fmt(result.p_value)}",
        f"{prefix}.n: {result.n}",
        f"{prefix}.method: {result.method}",
    ]


def _summary_pairs(report: EvaluationReport) -> list[tuple[str, str]]:
    lines = [
        f"model_kind: {report.model_kind}",
        f"checkpoint_epoch: {report.checkpoint_epoch}",
        f"count: {report.count}",
        f"grid: {report.n}x{report.m}",
        f"mask.pattern: {report.mask_pattern}",
        f"mask.af: {_fmt(report.mask_af)}",
        f"mask.fraction: {_fmt(report.mask_fraction)}",
    ]
    lines += _metric_lines("model", report.model)
    lines += _metric_lines("zero_filled", report.zero_filled)
    lines.append(f"psnr_gain_db: {_fmt(report.psnr_gain_db)}")
    lines += _wilcoxon_lines("wilcoxon_vs_zero_filled", report.wilcoxon_vs_zero_filled)
    if report.comparison is not None:
        lines.append(f"comparison_kind: {report.comparison_kind}")
        lines += _metric_lines("comparison", report.comparison)
        lines += _wilcoxon_lines("wilcoxon_vs_comparison", report.wilcoxon_vs_comparison)
    return [tuple(line.split(": ", 1)) for line in lines]


def report_to_text(report: EvaluationReport) -> str:
    return "".join(f"{key}: {value}\n" for key, value in _summary_pairs(report))


# =============================================================================
# Excel
# =============================================================================


def _cell_value(value: float) -> float | str:
    # openpyxl пишет inf/nan как невалидные числа
    return value if math.isfinite(value) else _fmt(value)


def _write_header(ws, headers: list[str]) -> None:
    for col_idx, header in enumerate(headers, start=1):
        cell = ws.cell(row=1, column=col_idx, value=header)
        cell.font = HEADER_FONT
        cell.fill = HEADER_FILL
        cell.alignment = HEADER_ALIGNMENT
        cell.border = THIN_BORDER


def generate_excel_report(report: EvaluationReport, output_path: str | Path) -> str:
    """Excel: лист метрик по изображениям (модель и zero-filled) и лист сводки."""
    start_time = time.perf_counter()
    excel_path = Path(output_path).expanduser().resolve()
    logger.info("Генерация Excel: %d изображений → %s", report.count, excel_path)

    wb = Workbook()
    ws = wb.active
    ws.title = "Метрики"
    _write_header(ws, HEADERS)
    for col_letter, width in COLUMN_WIDTHS.items():
        ws.column_dimensions[col_letter].width = width
    ws.freeze_panes = "A2"

    model, baseline = report.model, report.zero_filled
    for idx in range(report.count):
        row_data = [idx + 1]
        row_data += [_cell_value(getattr(model, name)[idx]) for name in METRIC_NAMES]
        row_data += [_cell_value(getattr(baseline, name)[idx]) for name in METRIC_NAMES]
        worse = model.psnr[idx] < baseline.psnr[idx]
        for col_idx, value in enumerate(row_data, start=1):
            cell = ws.cell(row=idx + 2, column=col_idx, value=value)
            cell.border = THIN_BORDER
            cell.alignment = DATA_ALIGNMENT_CENTER
            if worse:
                cell.fill = WORSE_FILL

    summary_ws = wb.create_sheet("Сводка")
    _write_header(summary_ws, ["Параметр", "Значение"])
    for col_letter, width in SUMMARY_WIDTHS.items():
        summary_ws.column_dimensions[col_letter].width = width
    summary_ws.freeze_panes = "A2"
    for row_idx, (key, value) in enumerate(_summary_pairs(report), start=2):
        for col_idx, item in enumerate((key, value), start=1):
            summary_ws.cell(row=row_idx, column=col_idx, value=item).border = THIN_BORDER

    excel_path.parent.mkdir(parents=True, exist_ok=True)
    wb.save(excel_path)
    logger.info("Excel сохранён: %s (%.2f сек)", excel_path, time.perf_counter() - start_time)
    return str(excel_path)


# =============================================================================
# Сохранение
# =============================================================================


@dataclass
class ReportPaths:
    text: Path
    json: Path
    excel: Path


def save_report(report: EvaluationReport, output_dir: str | Path) -> ReportPaths:
    out_dir = Path(output_dir).expanduser().resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = ReportPaths(
        text=out_dir / REPORT_TEXT_NAME,
        json=out_dir / REPORT_JSON_NAME,
        excel=out_dir / REPORT_XLSX_NAME,
    )
    paths.text.write_text(report_to_text(report), encoding="utf-8")
    paths.json.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    generate_excel_report(report, paths.excel)
    logger.info("Отчёт сохранён: %s", out_dir)
    return paths
