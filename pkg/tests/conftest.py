import math

import pytest
from hypothesis import HealthCheck, settings

from roadcross.config import ExperimentConfig, RoadGeometry, WorldParams, load_config

settings.register_profile("repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def cfg() -> ExperimentConfig:
    return load_config()


@pytest.fixture
def road() -> RoadGeometry:
    return RoadGeometry()


@pytest.fixture
def params() -> WorldParams:
    return WorldParams()


def close(a, b, rel=1e-12, abs_=1e-12):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


# -- acceptance report: one line per marked criterion ----------------------------------

_CRITERIA: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    failed_setup = rep.when == "setup" and not rep.passed
    if rep.when == "call" or failed_setup:
        detail = dict(item.user_properties).get("detail", "")
        if failed_setup:
            detail = "setup error"
        _CRITERIA.append(("PASS" if rep.passed else "FAIL", mark.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))
