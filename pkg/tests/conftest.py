import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from abnmle import ConstraintSpec, Dataset, build_cache

settings.register_profile(
    "abnmle", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("abnmle")


def gaussian_dataset(k, n, seed, corr=0.6):
    """Gaussian data from a random lower-triangular linear SEM."""
    rng = np.random.default_rng(seed)
    X = np.zeros((n, k))
    for j in range(k):
        X[:, j] = rng.normal(size=n)
        for i in range(j):
            if rng.random() < 0.5:
                X[:, j] += corr * rng.uniform(-1.5, 1.5) * X[:, i]
    return Dataset(tuple(f"v{j}" for j in range(k)), X, ("gaussian",) * k)


def gaussian_cache(k, n, seed, max_parents=None):
    ds = gaussian_dataset(k, n, seed)
    return build_cache(ds, ConstraintSpec.empty(k, max_parents or max(k - 1, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
