import numpy as np
import pytest

from cogeffort.net import backend
from cogeffort.synth import CohortSpec, generate_cohort


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", default=False,
                     help="skip the end-to-end training tests")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    marker = pytest.mark.skip(reason="--skip-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(marker)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs taking seconds")


@pytest.fixture(params=backend.available_backends())
def kernel_backend(request):
    """Run a test under every available kernel backend."""
    with backend.use(request.param) as kern:
        yield kern


@pytest.fixture(scope="session")
def default_cohort():
    return generate_cohort(CohortSpec(seed=42))


@pytest.fixture(scope="session")
def tiny_spec():
    # 1 session x 2 segments x 2 questions keeps generation cheap
    return CohortSpec(n_participants=4, n_questions=4, sessions=1,
                      segments_per_session=2, questions_per_segment=2,
                      samples_per_trial=40, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
