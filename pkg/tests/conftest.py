import numpy as np
import pytest

from episim.disease import builtin_model_path, load_disease_model
from episim.population import compute_max_occupancy, generate_synthetic, synthetic_preset

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def pop10k():
    pop = generate_synthetic(synthetic_preset("10k", seed=0))
    compute_max_occupancy(pop)
    return pop


@pytest.fixture(scope="session")
def seir():
    return load_disease_model(builtin_model_path("seir.disease"))


@pytest.fixture(scope="session")
def sir():
    return load_disease_model(builtin_model_path("sir.disease"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
