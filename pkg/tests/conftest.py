import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training criteria")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.environ.get("WAVERNN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow training run; use --runslow or WAVERNN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
