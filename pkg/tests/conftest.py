import os

import pytest
from hypothesis import HealthCheck, settings

from admissim.core_types import Slo, SloTable, ms
from admissim.workload import FromStats, QueryTypeSpec, WorkloadSpec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# (type, proportion, mean ms, p50 ms) of the four-type simulation mix
MIX = [("fast", 0.4, 1.16, 0.38), ("medium fast", 0.2, 2.53, 2.22),
       ("medium slow", 0.3, 12.13, 7.40), ("slow", 0.1, 20.05, 12.51)]
TYPE_NAMES = [t[0] for t in MIX]


def mix_spec(rate_qps: float = 1.0) -> WorkloadSpec:
    return WorkloadSpec(tuple(QueryTypeSpec(n, p, FromStats(m / 1e3, p50 / 1e3)) for n, p, m, p50 in MIX),
                        rate_qps)


def shared_slos(p50_ms: float = 18, p90_ms: float = 50) -> SloTable:
    return SloTable({"default": Slo(ms(p50_ms), ms(p90_ms))})


@pytest.fixture
def mix():
    return mix_spec()


@pytest.fixture
def slos():
    return shared_slos()


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
