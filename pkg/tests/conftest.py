import numpy as np
import pytest

from bpdl.domain import SpatialDomain
from bpdl.experiments.figures import reference_params
from bpdl.kernels import Kernel
from bpdl.model import make_params


def pytest_addoption(parser):
    parser.addoption("--expensive", action="store_true", default=False,
                     help="run the superprocess-scaling acceptance criterion (hours)")


def pytest_configure(config):
    config.addinivalue_line("markers", "expensive: needs --expensive")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
        if not any(line.startswith("ACCEPTANCE 13") for line in ACCEPTANCE_LINES):
            terminalreporter.write_line("ACCEPTANCE 13 finite-n bracket at n=50, limit bracket trend: "
                                        "SKIPPED (run with --expensive)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--expensive"):
        return
    skip = pytest.mark.skip(reason="needs --expensive")
    for item in items:
        if "expensive" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def ref():
    """Reference logistic model on a torus of side 40."""
    return reference_params(40.0)


@pytest.fixture
def ref10():
    return reference_params(10.0)


@pytest.fixture
def pure_death():
    return make_params(0.0, 1.0, 0.0, Kernel.indicator(0.5), Kernel.tophat(1.0), domain=SpatialDomain.torus(20.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
