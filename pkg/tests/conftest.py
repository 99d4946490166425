import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from afp.spectral import Field, Grid

settings.register_profile(
    "afp", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("afp")


@pytest.fixture
def small_grid():
    return Grid(8.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def gaussian(grid, width=1.0, center=(0.0, 0.0), twist=0.0):
    X, Y = grid.mesh()
    u = np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (2 * width ** 2))
    u = u * np.exp(1j * twist * (X * Y))
    f = Field(grid, u.astype(complex))
    return f.normalized()


def smooth_random(grid, rng, width=1.5, modes=6):
    """Sum of a few randomly placed, randomly phased Gaussians (normalized)."""
    X, Y = grid.mesh()
    u = np.zeros((grid.n, grid.n), complex)
    for _ in range(modes):
        cx, cy = rng.uniform(-1.5, 1.5, size=2)
        w = width * rng.uniform(0.6, 1.2)
        kx, ky = rng.normal(scale=0.8, size=2)
        amp = rng.normal() + 1j * rng.normal()
        u += amp * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * w * w) + 1j * (kx * X + ky * Y))
    return Field(grid, u).normalized()


def rel(a, b):
    return abs(a - b) / abs(b)


PI = math.pi


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
