import numpy as np
import pytest

from sdeapc import DomainGrid, aggregate, extract_diffs, extract_transitions
from sdeapc.simulate import generate, preset

SMALL = DomainGrid(25, 44, 2001, 2010)


def small_sim(name="smooth_gradient", seed=0, n=6000, grid=SMALL, **kw):
    spec = preset(name, seed, grid, n_individuals=n, n_topup=0, **kw)
    return generate(spec)


@pytest.fixture(scope="session")
def smooth_small():
    return small_sim()


@pytest.fixture(scope="session")
def smooth_counts(smooth_small):
    return aggregate(extract_transitions(smooth_small.panel, "exit", SMALL), SMALL)


@pytest.fixture(scope="session")
def smooth_diffs(smooth_small):
    return extract_diffs(smooth_small.panel, SMALL)


def counts_from(grid, n, k):
    from sdeapc import CellCounts
    return CellCounts(grid, np.asarray(n).reshape(grid.shape), np.asarray(k).reshape(grid.shape))


ACCEPTANCE = {}


def record_acceptance(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
