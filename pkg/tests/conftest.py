import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from smcf_lab.grid import GridSpec

settings.register_profile(
    "lab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("lab")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def trig_field(grid: GridSpec, rng: np.random.Generator, modes: int = 3, amp: float = 1.0) -> np.ndarray:
    """Random real trigonometric polynomial with wavevectors ``|k_i| <= modes``."""
    x = grid.coords
    u = np.zeros(grid.shape)
    for k in itertools.product(range(-modes, modes + 1), repeat=grid.dim):
        if any(k):
            phase = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, x))
            u += rng.normal() * np.cos(phase + rng.uniform(0, 2 * np.pi)) / (1 + sum(c * c for c in k))
    return amp * u


@st.composite
def trig_fields(draw, dims=(1, 2), res=(16, 32), modes=3):
    dim = draw(st.sampled_from(dims))
    n = draw(st.sampled_from(res))
    seed = draw(st.integers(0, 2**32 - 1))
    amp = draw(st.floats(0.05, 2.0))
    grid = GridSpec(dim, n)
    return grid, trig_field(grid, np.random.default_rng(seed), modes, amp)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
