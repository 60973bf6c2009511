import os
import sys
from dataclasses import dataclass

import pytest

import diac.sim.core

sys.path.insert(0, os.path.dirname(__file__))

DATA = os.path.join(os.path.dirname(__file__), "data")
CONSERVATION_TOL = 1e-9  # mJ

_audit = {"runs": 0, "worst": 0.0}


@dataclass
class _AuditedReport(diac.sim.core.SimReport):
    """SimReport that checks energy conservation as soon as ``run`` builds it."""

    def __post_init__(self):
        err = self.conservation_error()
        _audit["runs"] += 1
        _audit["worst"] = max(_audit["worst"], err)
        assert err <= CONSERVATION_TOL, f"energy drift {err:.3e} mJ"


@pytest.fixture(autouse=True)
def conservation_guard(monkeypatch):
    """Every simulation run anywhere in the suite must conserve energy.

    ``run`` looks SimReport up in its module globals, so this catches runs made
    through any imported alias of ``run`` (worker processes excepted).
    """
    monkeypatch.setattr(diac.sim.core, "SimReport", _AuditedReport)
    yield


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acc.RESULTS):
            terminalreporter.write_line(acc.RESULTS[n])
    terminalreporter.write_line(
        f"energy conservation audited on {_audit['runs']} simulations, "
        f"worst drift {_audit['worst']:.3e} mJ (tolerance {CONSERVATION_TOL:g})")


@pytest.fixture
def data_dir():
    return DATA
