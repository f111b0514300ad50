"""Cole-Hopf transform pair u = exp(-S/(2 nu)) / N0 and S = -2 nu ln|u|."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, apply_derivative

DEFAULT_FLOOR = 1e-280


class ColeHopfError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TransformConfig:
    nu: float
    use_normalisation: bool = False
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("viscosity must be positive")
        if not 0 < self.floor <= 1e-100:
            raise ValueError("floor must lie in (0, 1e-100]")


@dataclass(frozen=True)
class InverseResult:
    """Recovered S with the mask of points whose |u| was clamped to the floor."""

    S: Field
    clamped: np.ndarray

    @property
    def n_clamped(self) -> int:
        return int(self.clamped.sum())


def log_normaliser(S: Field, nu: float) -> float:
    """ln N0 with N0^2 = sum_j exp(-S_j / nu), evaluated stably."""
    a = -S.values / nu
    m = np.max(a)
    return 0.5 * (m + np.log(np.sum(np.exp(a - m))))


def forward(S: Field, cfg: TransformConfig) -> Field:
    expo = -S.values / (2 * cfg.nu)
    if cfg.use_normalisation:
        expo = expo - log_normaliser(S, cfg.nu)
    if np.max(expo) > 709.0:
        bad = np.unravel_index(np.argmax(expo), expo.shape)
        raise ColeHopfError(f"exp(-S/2nu) overflows at index {tuple(int(i) for i in bad)}")
    return S.with_values(np.exp(expo))


def inverse_checked(u: Field, cfg: TransformConfig) -> InverseResult:
    mag = np.abs(u.values)
    clamped = ~(mag >= cfg.floor)
    if np.all(clamped):
        raise ColeHopfError("every point of u lies below the underflow floor")
    S = -2 * cfg.nu * np.log(np.where(clamped, cfg.floor, mag))
    return InverseResult(u.with_values(S), clamped)


def inverse(u: Field, cfg: TransformConfig) -> Field:
    return inverse_checked(u, cfg).S


def gradient_from_u(u: Field, k: int, cfg: TransformConfig) -> Field:
    """-2 nu (D_k u)/u; complex input gives the magnitude signed by the real part."""
    du = apply_derivative(u, k).values
    uv = u.values
    small = np.abs(uv) < cfg.floor
    safe = np.where(small, cfg.floor, uv)
    g = -2 * cfg.nu * du / safe
    if np.iscomplexobj(g):
        g = np.abs(g) * np.where(g.real < 0, -1.0, 1.0)
    return u.with_values(np.real(g))


def near_floor(u: Field, cfg: TransformConfig, factor: float = 1e10) -> np.ndarray:
    return np.abs(u.values) < cfg.floor * factor
