import numpy as np
import pytest

import occtomo.forward as forward_mod
import occtomo.grid as grid_mod
import occtomo.solver as solver_mod
from occtomo import _backend

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per importable kernel backend."""
    k = _backend.load(request.param)
    for mod in (forward_mod, grid_mod, solver_mod):
        monkeypatch.setattr(mod, "kernels", k)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    def _report(criterion, ok, detail):
        ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}"
        print(ACCEPTANCE_LINES[criterion])
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
