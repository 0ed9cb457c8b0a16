import numpy as np
import pytest

from threshold_bell.detector import DetectorConfig
from threshold_bell.experiment import SourceConfig, StationConfig

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""

    def _report(number: int, title: str, passed: bool, detail: str = "", status: str | None = None) -> bool:
        status = status or ("PASS" if passed else "FAIL")
        _ACCEPTANCE_LINES.append(f"criterion {number}: {status}  {title}  {detail}".rstrip())
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def source():
    return SourceConfig(pulse_energy=1.0)


def noiseless_station(angle: float, work_function: float, discriminator: float = 0.0) -> StationConfig:
    return StationConfig.symmetric(angle, DetectorConfig(work_function, discriminator=discriminator))
