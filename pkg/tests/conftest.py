import pytest
from hypothesis import HealthCheck, settings

from hgs.graph import build_synthetic_cluster
from hgs.hierarchy import build_ladder

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# filled in by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line("criterion %2d: %s  %s" % (num, "PASS" if ok else "FAIL", detail))


@pytest.fixture
def small_cluster():
    return build_synthetic_cluster(2, 2, 4)


@pytest.fixture
def ladder():
    h = build_ladder()
    yield h
    h.close()


@pytest.fixture
def small_ladder():
    """Three levels over an 8-node cluster, nothing filled."""
    h = build_ladder(
        ["node:4 socket:8 core:32", "node:2 socket:4 core:16"],
        top={"nodes": 8, "sockets": 2, "cores": 4, "racks": 1},
        fill=False,
    )
    yield h
    h.close()
