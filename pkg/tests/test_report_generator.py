import json
import math

import pytest
from openpyxl import load_workbook

from services.metrics import MetricReport, WilcoxonResult
from services.report_generator import HEADERS, WORSE_FILL, report_to_text, save_report
from services.trainer import EvaluationReport


def _metric_report(psnr_values):
    count = len(psnr_values)
    report = MetricReport(
        mse=[0.01] * count,
        psnr=list(psnr_values),
        ssim=[0.9] * count,
        hfen=[0.2] * count,
    )
    report.recompute_summary()
    return report


@pytest.fixture
def report():
    model = _metric_report([30.0, math.inf, 25.0])
    baseline = _metric_report([20.0, 21.0, 26.0])
    return EvaluationReport(
        model_kind="dautomap",
        checkpoint_epoch=200,
        count=3,
        n=32,
        m=32,
        mask_pattern="cartesian",
        mask_af=2.0,
        mask_fraction=0.5,
        model=model,
        zero_filled=baseline,
        wilcoxon_vs_zero_filled=None,
        psnr_gain_db=model.summary["psnr"].mean - baseline.summary["psnr"].mean,
    )


def test_text_report_lines(report):
    lines = report_to_text(report).splitlines()
    assert lines[0] == "model_kind: dautomap"
    assert "grid: 32x32" in lines
    assert "mask.fraction: 0.5" in lines
    assert "model.psnr.mean: +inf" in lines
    assert "model.psnr.std: nan" in lines
    assert any(line.startswith("zero_filled.ssim.mean: 0.9") for line in lines)
    assert "wilcoxon_vs_zero_filled: undefined" in lines
    assert not any(line.startswith("comparison") for line in lines)


def test_text_report_with_wilcoxon(report):
    report.wilcoxon_vs_zero_filled = WilcoxonResult(statistic=6.0, p_value=0.25, n=3, method="exact")
    text = report_to_text(report)
    assert "wilcoxon_vs_zero_filled.p_value: 0.25\n" in text
    assert "wilcoxon_vs_zero_filled.method: exact\n" in text


def test_save_report_writes_three_files(report, tmp_path):
    paths = save_report(report, tmp_path / "report")
    assert paths.text.read_text(encoding="utf-8") == report_to_text(report)

    data = json.loads(paths.json.read_text(encoding="utf-8"))
    assert data["model"]["psnr"][1] == math.inf
    assert data["count"] == 3

    wb = load_workbook(paths.excel)
    assert wb.sheetnames == ["Метрики", "Сводка"]
    ws = wb["Метрики"]
    assert [cell.value for cell in ws[1]] == HEADERS
    assert ws.freeze_panes == "A2"
    assert ws.max_row == 4
    assert ws.cell(row=3, column=3).value == "+inf"
    # третье изображение: модель хуже zero-filled
    assert ws.cell(row=4, column=1).fill.start_color.rgb.endswith(WORSE_FILL.start_color.rgb[-6:])
    assert ws.cell(row=2, column=1).fill.fill_type is None

    summary = wb["Сводка"]
    assert summary.cell(row=2, column=1).value == "model_kind"
    assert summary.cell(row=2, column=2).value == "dautomap"


def test_text_report_is_deterministic(report, tmp_path):
    first = save_report(report, tmp_path / "a")
    second = save_report(report, tmp_path / "b")
    assert first.text.read_bytes() == second.text.read_bytes()
    assert first.json.read_bytes() == second.json.read_bytes()
