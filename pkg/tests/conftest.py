import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from featcodec import SyntheticSourceSpec, generate

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

PEAKY_SEED = 42


@pytest.fixture(scope="session")
def peaky():
    return generate(SyntheticSourceSpec("peaky-mixture", {}, PEAKY_SEED), 100_000)


@pytest.fixture(scope="session")
def flat():
    return generate(SyntheticSourceSpec("near-uniform", {}, 43), 100_000)


@pytest.fixture(scope="session")
def heavy():
    return generate(SyntheticSourceSpec("heavy-tail", {}, 44), 100_000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion(capsys):
    """Record and print a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = (bool(ok), detail)
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
