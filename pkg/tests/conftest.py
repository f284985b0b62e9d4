import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_prices(n: int, seed: int = 0, sigma: float = 0.05) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.cumprod(np.r_[1.0, np.exp(rng.normal(0.0, sigma, n - 1))])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
