import sys
from pathlib import Path

import pytest

# the shared simulate-then-fit helpers live next to the tests
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def tiny_config():
    from bayesbench.harness import ExperimentConfig

    return ExperimentConfig(
        algorithms=["DifferentialEvolution", "PSO", "RandomSearch1"],
        benchmarks=["sphere6d", "zakharov2d"],
        noise_levels=[0.0, 3.0],
        budgets_per_dim=[20],
        repetitions=3,
        master_seed=11,
        timing="off",
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_config):
    from bayesbench.harness import run_experiment

    return run_experiment(tiny_config)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
