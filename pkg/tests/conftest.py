from __future__ import annotations

import time

import numpy as np
import pytest

from quasimodes.conclab import coupled_experiment
from quasimodes.surface import (ConformalFamily, SurfaceOfRevolution, constant_factor,
                                make_coupled_factor, make_flat_factor)

COUPLED_MS = list(range(8, 17))


@pytest.fixture(scope="session")
def torus():
    return SurfaceOfRevolution.torus(2.0, 1.0)


@pytest.fixture(scope="session")
def flat_torus():
    return SurfaceOfRevolution.flat(1.0, 2 * np.pi)


@pytest.fixture(scope="session")
def flat_family(torus):
    return ConformalFamily.uniform(torus, make_flat_factor(torus, 8, 1.0), 11)


@pytest.fixture(scope="session")
def zero_family(flat_torus):
    return ConformalFamily(flat_torus, constant_factor(0.0))


@pytest.fixture(scope="session")
def coupled_run():
    """The coupled-regime sweep (a few minutes); shared by every test that needs it."""
    torus = SurfaceOfRevolution.torus(2.0, 1.0)
    fam = ConformalFamily.uniform(torus, make_coupled_factor(torus, 8, 1.0, 0.3), 41)
    start = time.perf_counter()
    scheme, report = coupled_experiment(fam, COUPLED_MS, N_s=192, N_phi=96)
    report.meta["wall_time_s"] = time.perf_counter() - start
    return scheme, report


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
