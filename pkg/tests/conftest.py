import pytest


def pytest_collection_modifyitems(config, items):
    # heavy solver runs share the in-process cache, so keep acceptance last
    items.sort(key=lambda it: "test_acceptance" in it.nodeid)
