import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_units(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_tangent(rng, q, scale=1.0):
    w = scale * rng.normal(size=q.shape)
    return w - np.sum(w * q, axis=-1, keepdims=True) * q


def pytest_terminal_summary(terminalreporter):
    from runs import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
