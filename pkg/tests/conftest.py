import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ppdsim.experiments import run_scenario
from ppdsim.scenario import load_preset


class OneShot:
    """Controller that issues a fixed set of packets on the first tick only."""

    state: dict = {}

    def __init__(self, *issues):
        self.issues = list(issues)

    def demand_names(self):
        return []

    def output_floors(self):
        return {}

    def decide(self, t, net):
        out, self.issues = self.issues, []
        return out


@functools.lru_cache(maxsize=None)
def preset_run(name: str):
    """(scenario, trace, report) for a bundled preset at its own settings, computed once."""
    sc = load_preset(name)
    trace, report = run_scenario(sc)
    return sc, trace, report


@pytest.fixture(scope="session")
def selectivity_run():
    return preset_run("selectivity_3node")


@pytest.fixture(scope="session")
def case_i():
    return preset_run("sharing_case_i")


@pytest.fixture(scope="session")
def gap_cases():
    return {c: preset_run(f"sharing_case_{c}") for c in ("i", "ii", "iii")}


_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """criterion number -> (passed, title, detail); printed after the run."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, title, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} | {detail}")
