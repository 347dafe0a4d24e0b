import pathlib
import time

import pytest

from frictionflow.config import load_config, run_config

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"
REFERENCE_DTS = (0.01, 0.005, 0.0025)
ACCEPTANCE = pytest.StashKey[list]()
RUN_SECONDS = pytest.StashKey[float]()


@pytest.fixture(scope="session")
def reference_config():
    return load_config(CONFIGS / "reference.json")


@pytest.fixture(scope="session")
def reference_runs(request, reference_config):
    """Reference trajectories keyed by time step, coarse to fine."""
    start = time.perf_counter()
    runs = {dt: run_config(reference_config.with_values(**{"time.dt": dt})) for dt in REFERENCE_DTS}
    request.config.stash[RUN_SECONDS] = time.perf_counter() - start
    return runs


@pytest.fixture(scope="session")
def reference_seconds(request, reference_runs):
    """Wall time spent producing ``reference_runs``."""
    return request.config.stash[RUN_SECONDS]


@pytest.fixture(scope="session")
def reference_run(reference_runs):
    return reference_runs[REFERENCE_DTS[-1]]


@pytest.fixture(scope="session")
def small_config(reference_config):
    """Reference physics on a coarse grid and short horizon."""
    return reference_config.with_values(**{
        "domain.nx": 16, "domain.ny": 8, "space.n": 6, "time.T": 0.1, "time.dt": 0.01,
    })


@pytest.fixture(scope="session")
def small_run(small_config):
    return run_config(small_config)


@pytest.fixture()
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
