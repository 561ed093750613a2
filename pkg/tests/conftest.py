import numpy as np
import pytest

from modalbw.cli import read_dataset
from modalbw.density import Sample


@pytest.fixture(scope="session")
def geyser():
    sample, _ = read_dataset("geyser")
    return sample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sample(rng, n, spread=1.0):
    x = rng.normal(size=n)
    y = x + spread * rng.normal(size=n)
    return Sample(x, y)


ACCEPTANCE_LINES = []


def record_acceptance(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def c2_oracle_report():
    from modalbw.simulation import SimulationConfig, run_experiment

    return run_experiment(SimulationConfig("C2"), ["oracle_density", "oracle_mode"], replicates=20, n=500, seed=77)
