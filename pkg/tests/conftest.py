import os

import pytest

FULL = os.environ.get("NEUTRALFLOW_ACCEPT_FULL", "") == "1"


def pytest_collection_modifyitems(config, items):
    if FULL:
        return
    skip = pytest.mark.skip(reason="long-running tier; set NEUTRALFLOW_ACCEPT_FULL=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
