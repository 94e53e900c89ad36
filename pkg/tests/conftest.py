import os
import time

import pytest

from sulfursense.fdtd.scene import PatchScene, SimulationSpec, SuperstrateProfile
from sulfursense.fdtd.sweep import simulate_trace
from sulfursense.sparams import find_dip

#: criterion number -> (passed, detail), printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", help="run the long FDTD convergence and stability checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.environ.get("SULFURSENSE_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="long FDTD run; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


class PatchRuns:
    """Default-grid patch simulations shared across test modules."""

    def __init__(self):
        self._runs = {}

    def get(self, t: float, kind: str = "uniform", amplitude: float | None = None):
        key = (kind, float(t), amplitude)
        if key not in self._runs:
            if kind == "uniform":
                profile = SuperstrateProfile.uniform(t)
            else:
                profile = SuperstrateProfile.wavy(t, amplitude)
            spec = SimulationSpec(scene=PatchScene(profile=profile))
            start = time.perf_counter()
            trace, decayed = simulate_trace(spec)
            elapsed = time.perf_counter() - start
            self._runs[key] = (trace, decayed, find_dip(trace), elapsed)
        return self._runs[key]

    def dip(self, t: float, kind: str = "uniform", amplitude: float | None = None) -> float:
        return self.get(t, kind, amplitude)[2].f_res


@pytest.fixture(scope="session")
def patch_runs():
    return PatchRuns()
