import numpy as np
import pytest

from aircomp.validation import random_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_model(rng):
    return random_model(rng, 3, rho_max=0.9)


def within_se(samples, target, k=3.0):
    """True if the sample mean is within ``k`` standard errors of ``target``."""
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return abs(samples.mean() - target) <= k * se


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    def log(criterion: int, passed: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
