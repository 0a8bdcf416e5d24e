import numpy as np
import pytest

from risae.autoencoder import ModelShape, Scenario, init_model
from risae.channel import Geometry


@pytest.fixture(scope="session")
def standard_scenario():
    return Scenario.standard()


@pytest.fixture
def small_scenario():
    return Scenario.standard(Geometry(n_elements=4), codebook_size=4)


@pytest.fixture
def small_model(small_scenario):
    return init_model(small_scenario, ModelShape((16, 16), (25, 25, 25, 25), (64, 64, 64)), seed=3)


# ---------------------------------------------------- acceptance report

_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """``record(criterion, part, ok, detail)``; summarized at the end of the run."""

    def record(criterion: int, part: str, ok: bool, detail: str = ""):
        _ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[crit]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        tr.write_line(f"criterion {crit}: {verdict}")
        for part, ok, detail in parts:
            tr.write_line(f"    [{'pass' if ok else 'FAIL'}] {part}")
            for line in detail.splitlines():
                tr.write_line(f"        {line}")
