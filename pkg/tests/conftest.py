"""Shared fixtures; the golden run is expensive, so it is computed once per session."""

from __future__ import annotations

import time
from pathlib import Path

import pytest

from legflow.config import parse_config
from legflow.flow import run

ROOT = Path(__file__).resolve().parents[1]
GOLDEN_CONFIG = ROOT / "configs" / "golden.json"


def golden_flow_config():
    return parse_config(GOLDEN_CONFIG, verb="flow")


@pytest.fixture(scope="session")
def golden():
    """Golden hyperbolic run plus its wall time."""
    cfg = golden_flow_config()
    t0 = time.perf_counter()
    result = run(cfg.experiment)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def golden_csv(golden, tmp_path_factory):
    path = tmp_path_factory.mktemp("golden") / "trajectory.csv"
    golden[0].write_csv(path)
    return path.read_bytes()


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, title, ok, detail)`` records one acceptance line and asserts it."""

    def record(n: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
