import numpy as np
import pytest

from hybrid_dynamics.waveform import Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_waveform(rng, samples=6, span=1.0, wid="w"):
    times = np.linspace(0.0, span, samples)
    u = np.sin(5.0 * times) + 0.2 * rng.standard_normal(samples)
    y = np.cos(3.0 * times)
    return Waveform(wid, times, u, y)


@pytest.fixture
def waveform(rng):
    return make_waveform(rng)


_ACCEPTANCE = []


class _Criterion:
    def __init__(self, code, title):
        self.code, self.title, self.detail = code, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = self.detail if exc_type is None else f"{self.detail} {exc}".strip().splitlines()[0]
        line = f"{self.code} {status}  {self.title}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    """Context manager that records one pass/fail line per acceptance criterion."""
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
