import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_spec():
    from pareto_forge.net import MTLSpec

    return MTLSpec("mdmtn", 6, (3, 3), shared=(8, 6), monitors=(6,), heads=(5,))


@pytest.fixture(scope="session")
def small_data():
    from pareto_forge.bench.dataset import DatasetConfig, make_dataset

    return make_dataset(DatasetConfig(n_features=6, n_classes=(3, 3), n_samples=600,
                                      subspace_dim=3, overlap=1, seed=3))


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if report.failed:
        message = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
        detail = f"{detail}; {message}" if detail else message
    _CRITERIA[number] = (title, report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}: {title} ({detail})")
