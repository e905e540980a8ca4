import functools

import pytest

from skyrelay.scenario import CellConfig, simulate

# one line per acceptance criterion, printed after the run
_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE


def _order(line):
    # "CALIBRATION: ..." first, then "CRITERION k: ..." by k
    tag = line.split()[1].rstrip(":") if line.startswith("CRITERION") else "0"
    return int(tag)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE, key=_order):
        terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def _cached(cfg: CellConfig):
    return simulate(cfg)


@pytest.fixture(scope="session")
def run_cell():
    """Memoised single-cell runner: ``run_cell(kind, n, fps=30, **CellConfig fields)``."""
    def run(kind, n, fps=30.0, **kw):
        return _cached(CellConfig(scenario=kind, n_vehicles=n, fps=float(fps), **kw))
    return run
