import pytest

from perihom.config import demo_config
from perihom.harness import run_verification


@pytest.fixture(scope="session")
def report_constant():
    return run_verification(demo_config("constant"))


@pytest.fixture(scope="session")
def report_two_phase():
    return run_verification(demo_config("1d-two-phase"))


@pytest.fixture(scope="session")
def report_schrodinger():
    return run_verification(demo_config("schrodinger-1d"))


@pytest.fixture(scope="session")
def report_rho():
    return run_verification(demo_config("rho-regime-1d"))
