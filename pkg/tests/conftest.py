import numpy as np
import pytest

from acmhd.spectral import Grid3, random_field


@pytest.fixture(scope="session")
def g16():
    return Grid3(16)


@pytest.fixture(scope="session")
def g32():
    return Grid3(32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def band_limited(grid, seed, vector=False, **kw):
    return random_field(grid, np.random.default_rng(seed), vector=vector, **kw)


_VERDICTS: dict[int, str] = {}


@pytest.fixture(scope="session")
def verdict():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _VERDICTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
