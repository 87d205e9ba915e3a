import sys

import pytest

from sampdist.sampler import Instance
from sampdist.seeds import FixedSeeds, Mode

KEYS = "abcdef"
V1 = (5.0, 0.0, 4.0, 5.0, 8.0, 7.0)
V2 = (7.0, 10.0, 3.0, 0.0, 6.0, 7.0)
U1 = (0.23, 0.29, 0.84, 0.15, 0.58, 0.19)
U2 = (0.81, 0.17, 0.48, 0.36, 0.15, 0.49)


def make_instance(values, instance_id):
    return Instance({k: x for k, x in zip(KEYS, values) if x > 0}, instance_id)


@pytest.fixture
def six_key_pair():
    return make_instance(V1, 1), make_instance(V2, 2)


@pytest.fixture
def printed_seeds_independent():
    table = {(1, k): u for k, u in zip(KEYS, U1)}
    table.update({(2, k): u for k, u in zip(KEYS, U2)})
    return FixedSeeds(table, Mode.INDEPENDENT)


@pytest.fixture
def printed_seeds_coordinated():
    return FixedSeeds(dict(zip(KEYS, U1)), Mode.COORDINATED)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
