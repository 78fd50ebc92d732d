"""Shared fixtures. Full 20-minute filter runs are cached per session."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from magbias.ekf import CalibrationResult, FilterConfig, FilterTrace, run_filter
from magbias.samples import ImuLog
from magbias.simulate import GroundTruth, ScenarioSpec, generate, preset_sim1, preset_sim2

TRUE_M_B = np.array([0.06, -0.07, -0.10])
TRUE_T_P = np.array([1.1, 0.1, 0.03, 0.95, 0.01, 1.2])
TRUE_W_B = np.array([-0.002, 0.003, -0.001])


@dataclass
class SimRun:
    spec: ScenarioSpec
    log: ImuLog
    truth: GroundTruth
    cfg: FilterConfig
    result: CalibrationResult
    trace: FilterTrace


def run_scenario(spec: ScenarioSpec) -> SimRun:
    log, truth = generate(spec)
    cfg = FilterConfig(field_mag_sq=spec.field_mag_sq, declination=spec.heading_offset)
    result, trace = run_filter(log, cfg)
    return SimRun(spec, log, truth, cfg, result, trace)


@pytest.fixture(scope="session")
def sim1_run() -> SimRun:
    return run_scenario(preset_sim1())


@pytest.fixture(scope="session")
def sim2_run() -> SimRun:
    return run_scenario(preset_sim2())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, passed: bool, detail: str) -> bool:
    """Record (and print) one acceptance line; returns ``passed``."""
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
