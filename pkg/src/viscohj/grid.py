"""Periodic grids on the torus [-1/2, 1/2)^d, fields on them, and discrete operators."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n_x`` points per dimension."""

    d: int
    n_x: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise GridError(f"dimension d={self.d} outside the supported range 1..3")
        if self.n_x < 4 or self.n_x % 2:
            raise GridError(f"n_x={self.n_x} must be even and at least 4")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_x

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.d

    @property
    def size(self) -> int:
        return self.n_x**self.d

    @property
    def coords_1d(self) -> np.ndarray:
        return -0.5 + np.arange(self.n_x) / self.n_x

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape``, one per dimension."""
        return tuple(np.meshgrid(*([self.coords_1d] * self.d), indexing="ij"))

    def points(self) -> np.ndarray:
        """All grid points as an (n_x^d, d) array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def index_to_coord(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return -0.5 + (idx % self.n_x) / self.n_x

    def coord_to_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.rint((x + 0.5) * self.n_x).astype(int) % self.n_x

    def flat_index(self, idx) -> int:
        return int(np.ravel_multi_index(tuple(np.atleast_1d(idx) % self.n_x), self.shape))

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer Fourier modes per dimension, broadcast to ``self.shape``."""
        k = np.fft.fftfreq(self.n_x, d=1.0 / self.n_x)
        return tuple(np.meshgrid(*([k] * self.d), indexing="ij"))


def make_grid(d: int, n_x: int) -> Grid:
    return Grid(int(d), int(n_x))


@dataclass(frozen=True)
class Field:
    """Scalar values on a grid, stored with shape ``grid.shape``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size != self.grid.size:
            raise GridError(f"field has {v.size} values, grid has {self.grid.size} points")
        object.__setattr__(self, "values", v.reshape(self.grid.shape))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def norm_l2(self) -> float:
        """Unweighted root-sum-square norm."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)))

    def norm_l2_weighted(self) -> float:
        """Volume-weighted norm, approximating the continuum L2 norm."""
        return self.norm_l2() * self.grid.dx ** (self.grid.d / 2)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def at(self, idx):
        return self.values[tuple(np.atleast_1d(idx) % self.grid.n_x)]


def field_from_function(grid: Grid, fn) -> Field:
    """Evaluate ``fn(*coords)`` on the grid mesh."""
    return Field(grid, np.broadcast_to(fn(*grid.mesh()), grid.shape).copy())


def shift(f: Field, k: int, s: int) -> Field:
    """Periodic shift: ``out(x) = f(x + s*dx*e_k)``."""
    return f.with_values(np.roll(f.values, -s, axis=k))


def apply_derivative(f: Field, k: int) -> Field:
    """Central difference along axis ``k`` with periodic wrap."""
    if not 0 <= k < f.grid.d:
        raise GridError(f"axis {k} out of range for d={f.grid.d}")
    v = f.values
    return f.with_values((np.roll(v, -1, axis=k) - np.roll(v, 1, axis=k)) / (2 * f.grid.dx))


def apply_momentum(f: Field, k: int) -> Field:
    """P_k = -i D_k, Hermitian on the periodic grid."""
    return f.with_values(-1j * apply_derivative(f, k).values)


def apply_second_derivative(f: Field, k: int) -> Field:
    v = f.values
    return f.with_values((np.roll(v, -1, axis=k) - 2 * v + np.roll(v, 1, axis=k)) / f.grid.dx**2)


def apply_laplacian(f: Field) -> Field:
    out = np.zeros_like(f.values)
    for k in range(f.grid.d):
        out = out + apply_second_derivative(f, k).values
    return f.with_values(out)


def fft_multiplier(f: Field, m) -> Field:
    """Inverse FFT of ``m * FFT(f)``.

    ``m`` is an array over the modes in numpy FFT order or a callable of the
    integer wavenumber arrays. Real input with a Hermitian-symmetric multiplier
    returns a real field when the imaginary residue is below 1e-12 of the scale.
    """
    g = f.grid
    if callable(m):
        m = m(*g.wavenumbers())
    m = np.broadcast_to(np.asarray(m), g.shape)
    out = np.fft.ifftn(m * np.fft.fftn(f.values))
    if not f.is_complex:
        scale = max(np.max(np.abs(out)), 1e-300)
        if np.max(np.abs(out.imag)) <= 1e-12 * scale:
            out = out.real
    return f.with_values(out)


# dense matrix representations, used where explicit operators are needed


def shift_matrix(grid: Grid, k: int, s: int) -> np.ndarray:
    n = grid.size
    return np.stack([shift(Field(grid, e), k, s).flat() for e in np.eye(n)], axis=1)


def derivative_matrix(grid: Grid, k: int) -> np.ndarray:
    return (shift_matrix(grid, k, 1) - shift_matrix(grid, k, -1)) / (2 * grid.dx)


def momentum_matrix(grid: Grid, k: int) -> np.ndarray:
    return -1j * derivative_matrix(grid, k)


def position_matrix(grid: Grid, k: int) -> np.ndarray:
    return np.diag(grid.mesh()[k].ravel())


def laplacian_matrix(grid: Grid) -> np.ndarray:
    n = grid.size
    lap = np.zeros((n, n))
    for k in range(grid.d):
        lap += (shift_matrix(grid, k, 1) - 2 * np.eye(n) + shift_matrix(grid, k, -1)) / grid.dx**2
    return lap


def all_indices(grid: Grid):
    return product(range(grid.n_x), repeat=grid.d)
