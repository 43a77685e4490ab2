import os

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance runs; enabled with HCG_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.getenv("HCG_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set HCG_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
