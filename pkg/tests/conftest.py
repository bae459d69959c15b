import zlib

import numpy as np
import pytest

from marrq.flow import CalibrationSet, generate_toy_network
from marrq.quantizer import QuantConfig

DEMO_WIDTHS = [32, 64, 64, 64, 64, 64, 32]

_criteria: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def rng(request):
    # Stable per-test seed so failures reproduce in isolation.
    return np.random.default_rng(zlib.crc32(request.node.name.encode()))


@pytest.fixture(scope="session")
def small_net():
    return generate_toy_network(3, [8, 12, 10, 6], seed=7)


@pytest.fixture(scope="session")
def small_calib():
    return CalibrationSet.generate(8, 40, seed=8)


@pytest.fixture(scope="session")
def demo_net():
    return generate_toy_network(6, DEMO_WIDTHS, seed=0)


@pytest.fixture(scope="session")
def demo_calib():
    return CalibrationSet.generate(DEMO_WIDTHS[0], 256, seed=1)


@pytest.fixture(scope="session")
def w2a4():
    return QuantConfig(weight_bits=2, act_bits=4)


@pytest.fixture
def criterion():
    """Record a named acceptance criterion outcome for the terminal summary."""

    def record(key: str, passed: bool, detail: str = ""):
        _criteria[key] = (bool(passed), detail)
        return passed

    return record


def _sort_key(key: str):
    num = "".join(ch for ch in key if ch.isdigit())
    return int(num or 0), key


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=_sort_key):
        passed, detail = _criteria[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {key}: {detail}")
