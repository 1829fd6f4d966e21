"""Корень проекта в sys.path и флаг --runslow для долгих тестов."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.resolve()))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="запускать тесты с меткой slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="долгий тест: запустите с --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
