"""Shared fixtures: a coarse NACA0012 case with a handful of converged
snapshots and the databases built from them."""
import sys

import numpy as np
import pytest

from liftrom.case import naca_case
from liftrom.cst import perturb_family
from liftrom.pipeline import build_database, run_fom

SMALL_MESH = {"n_wrap": 32, "n_radial": 12, "far_radius": 10.0}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size runs (acceptance suite)")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: (isinstance(k, str), str(k).zfill(3))):
        title, ok, detail = results[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{key}] {title}: {detail}")


@pytest.fixture(scope="session")
def small_case():
    return naca_case(**SMALL_MESH)


@pytest.fixture(scope="session")
def small_thetas(small_case):
    return perturb_family(small_case.base, small_case.fraction, 10, small_case.active, seed=0)


@pytest.fixture(scope="session")
def small_snapshots(small_case, small_thetas):
    return [run_fom(small_case, th, keep=True) for th in small_thetas]


@pytest.fixture(scope="session")
def small_db(small_case, small_thetas, small_snapshots):
    return build_database(small_case, small_thetas, 0.9999, snapshots=small_snapshots)


@pytest.fixture(scope="session")
def small_db_full(small_case, small_thetas, small_snapshots):
    return build_database(small_case, small_thetas, 1.0, snapshots=small_snapshots)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
