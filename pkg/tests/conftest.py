import numpy as np
import pytest

from liabil.data import PairRecord, TwinData
from liabil.simulate import design, simulate_cohort


@pytest.fixture(scope="session")
def small_cohort():
    """250 MZ + 250 DZ pairs from the baseline design."""
    return simulate_cohort(design("baseline-equal", n_mz=250, n_dz=250, seed=11))


@pytest.fixture(scope="session")
def cohort():
    return simulate_cohort(design("baseline-equal", n_mz=2000, n_dz=2000, seed=5))


@pytest.fixture(scope="session")
def covariate_cohort():
    return simulate_cohort(design("covariate-equal", n_mz=2000, n_dz=2000, seed=9))


@pytest.fixture(scope="session")
def uncensored():
    return simulate_cohort(design("baseline-equal", n_mz=1000, n_dz=1000, censoring="none", seed=3))


def make_pairs(rows, x_names=(), z_names=()):
    """Build TwinData from tuples (zygosity, (t1, t2), (s1, s2))."""
    recs = [PairRecord(f"p{i}", z, tuple(map(float, t)), tuple(s),
                       tuple(tuple() for _ in range(2)), tuple(tuple() for _ in range(2)))
            for i, (z, t, s) in enumerate(rows)]
    return TwinData.from_records(recs, x_names, z_names)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


_criteria = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail=""):
        _criteria[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
