import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from invlab.model import ModelParams, uniform  # noqa: E402
from invlab.solver import solve  # noqa: E402


@pytest.fixture(scope="session")
def ref_params():
    return ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.7, n=50, x0=0.0)


@pytest.fixture(scope="session")
def ref_demand():
    return uniform(0.0, 1.0)


@pytest.fixture(scope="session")
def ref_solution(ref_params, ref_demand):
    return solve(ref_params, ref_demand)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
