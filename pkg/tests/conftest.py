import numpy as np
import pytest

from phaseforge.spectral import AnalysisConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return AnalysisConfig(sample_rate=8000, win_len=64, hop_len=16, fft_size=64)


# One summary line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abc")), k)):
            terminalreporter.write_line(ACCEPTANCE[key])
