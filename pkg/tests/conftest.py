import numpy as np
import pytest

from mvpoisson.marginals import DiscreteMarginal, truncate, truncated_poisson


@pytest.fixture
def coin_marginals():
    """P1 = [0.5, 0.5], P2 = [0.3, 0.7]."""
    return [truncate(DiscreteMarginal.explicit([0.5, 0.5]), 0.01),
            truncate(DiscreteMarginal.explicit([0.3, 0.7]), 0.01)]


@pytest.fixture(scope="session")
def poisson_357():
    return [truncated_poisson(lam, 0.01) for lam in (3, 5, 7)]


@pytest.fixture
def point_masses():
    return [truncate(DiscreteMarginal.explicit([1.0]), 0.01) for _ in range(2)]


def random_pmf(rng: np.random.Generator, max_len: int = 8, zero_frac: float = 0.0) -> list[float]:
    n = int(rng.integers(1, max_len + 1))
    p = rng.random(n) + 0.05
    if zero_frac and n > 2:
        p[1:-1][rng.random(n - 2) < zero_frac] = 0.0
    return list(p / p.sum())


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
