from importlib import resources

import pytest
from hypothesis import HealthCheck, settings

from rydsps.core import load_config

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def bundled(name):
    return resources.files("rydsps").joinpath("data", name)


@pytest.fixture(scope="session")
def base_cfg():
    return load_config(bundled("baseline.ini"))


@pytest.fixture(scope="session")
def desk_hbt_cfg():
    return load_config(bundled("desk_hbt.ini"))


@pytest.fixture(scope="session")
def desk_hom_cfg():
    return load_config(bundled("desk_hom.ini"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
