import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from stratmc.parsing import parse_spec, resolve_module

SPECS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "specs")

RIVER_SPEC = os.path.join(SPECS, "river.spec")
VENDING_SPEC = os.path.join(SPECS, "vending.spec")


@pytest.fixture(scope="session")
def river_source():
    with open(RIVER_SPEC, encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def vending_source():
    with open(VENDING_SPEC, encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def river(river_source):
    return resolve_module(parse_spec(river_source))


@pytest.fixture(scope="session")
def vending(vending_source):
    return resolve_module(parse_spec(vending_source))
