import numpy as np
import pytest

from viscohj.grid import Field, make_grid


def smooth_field(grid, rng, amplitude=1.0, modes=3):
    """Random trigonometric polynomial with a few low modes per axis."""
    vals = np.zeros(grid.shape)
    mesh = grid.mesh()
    for _ in range(modes):
        phase = rng.uniform(0, 2 * np.pi)
        k = rng.integers(1, 4, size=grid.d)
        arg = sum(2 * np.pi * kk * x for kk, x in zip(k, mesh)) + phase
        vals += rng.uniform(-1, 1) * np.cos(arg)
    vals *= amplitude / max(np.max(np.abs(vals)), 1e-12)
    return Field(grid, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1d():
    return make_grid(1, 64)
