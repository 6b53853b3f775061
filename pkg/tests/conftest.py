import numpy as np
import pytest
from hypothesis import settings

from wquant.experiments import DistributionSpec, sample

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def laplace10k():
    """One Laplacian sample of 10 000 values (unit scale, seed 7)."""
    return sample(DistributionSpec(kind="laplacian", count=10_000, seed=7))


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(number, title, ok, detail=""):
        _ACCEPTANCE.append((number, title, bool(ok), detail))
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
