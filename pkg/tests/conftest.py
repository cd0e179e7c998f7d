import pytest

from vodu_alloc.model import Demand, Instance, PoolModel


def small_pool(m_count=2, z_max=4.0, **kw):
    params = dict(
        z_max=z_max,
        cpu_freq_hz=2.0e9,
        p_idle_w=87.0,
        p_full_w=145.0,
        cycles_per_packet=1.0e6,
        latency_threshold_s=0.01,
    )
    params.update(kw)
    return PoolModel.line_topology(m_count, **params)


def benign_vsc(cpus):
    return Demand.vsc(cpus, 100.0, 1.0e6)


def benign_tolerant(cpus):
    return Demand.tolerant(cpus, 100.0)


@pytest.fixture
def pool():
    return small_pool()


@pytest.fixture
def example_instance():
    """Two 2-CPU cameras and one 1-CPU tolerant user on a 2 x 4-CPU pool."""
    return Instance(small_pool(), [benign_vsc(2), benign_vsc(2), benign_tolerant(1)])


@pytest.fixture(scope="session")
def repo_root():
    from pathlib import Path

    return Path(__file__).resolve().parent.parent


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
