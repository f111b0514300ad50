"""Linear parabolic PDE du/dt = a u + b.grad u + c:grad grad u on the periodic grid."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import colehopf
from .grid import Field, Grid, apply_derivative, apply_second_derivative
from .problems import ProblemSpec, continuum_coefficients


class CFLError(ValueError):
    pass


class NumericalAbort(ArithmeticError):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


SourceLike = Union[float, np.ndarray, Callable[[float], np.ndarray]]


@dataclass
class LinearPdeCoefficients:
    """Source a (scalar, grid array, or callable of t), drift b, diffusion matrix c."""

    grid: Grid
    a: SourceLike
    b: np.ndarray
    c: np.ndarray
    time_dependent: bool = False

    def __post_init__(self):
        d = self.grid.d
        self.b = np.broadcast_to(np.asarray(self.b, float), (d,)).copy()
        c = np.asarray(self.c, float)
        self.c = c * np.eye(d) if c.ndim == 0 else np.atleast_2d(c).copy()
        if self.c.shape != (d, d):
            raise ValueError(f"diffusion matrix has shape {self.c.shape}, expected ({d}, {d})")
        if not np.allclose(self.c, self.c.T, atol=1e-14):
            raise ValueError("diffusion matrix must be symmetric")
        if np.linalg.eigvalsh(self.c).min() < -1e-12:
            raise ValueError("diffusion matrix must be positive semidefinite")
        if callable(self.a):
            self.time_dependent = True

    def a_at(self, t: float = 0.0):
        if callable(self.a):
            return np.broadcast_to(np.asarray(self.a(t), float), self.grid.shape)
        return self.a

    @property
    def constant_source(self) -> bool:
        if callable(self.a):
            return False
        a = np.asarray(self.a)
        return a.ndim == 0 or bool(np.all(a == a.flat[0]))

    def a_scalar(self) -> float:
        return float(np.asarray(self.a).flat[0])

    def a_max(self, t: float = 0.0) -> float:
        return float(np.max(np.abs(self.a_at(t))))

    def rhs(self, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        g = self.grid
        f = Field(g, u)
        out = self.a_at(t) * u
        for j in range(g.d):
            if self.b[j]:
                out = out + self.b[j] * apply_derivative(f, j).values
            if self.c[j, j]:
                out = out + self.c[j, j] * apply_second_derivative(f, j).values
            for k in range(j + 1, g.d):
                if self.c[j, k]:
                    mixed = apply_derivative(apply_derivative(f, j), k).values
                    out = out + 2 * self.c[j, k] * mixed
        return out

    def symbol(self, kind: str = "discrete") -> np.ndarray:
        """Fourier symbol of the constant-coefficient operator (a must be constant)."""
        g = self.grid
        ks = g.wavenumbers()
        if kind == "discrete":
            first = [1j * np.sin(2 * np.pi * k * g.dx) / g.dx for k in ks]
            second = [-4 * np.sin(np.pi * k * g.dx) ** 2 / g.dx**2 for k in ks]
        elif kind == "continuum":
            # Nyquist mode has no partner; drop its odd part to keep real data real
            nyq = [np.where(np.abs(k) == g.n_x // 2, 0.0, k) for k in ks]
            first = [2j * np.pi * k for k in nyq]
            second = [-((2 * np.pi * k) ** 2) for k in ks]
        else:
            raise ValueError(f"unknown symbol kind {kind!r}")
        sym = np.full(g.shape, self.a_scalar(), dtype=complex)
        for j in range(g.d):
            sym += self.b[j] * first[j] + self.c[j, j] * second[j]
            for k in range(j + 1, g.d):
                sym += 2 * self.c[j, k] * first[j] * first[k]
        return sym


@dataclass
class IntegratorConfig:
    method: str = "explicit_rk4"
    h_t: Optional[float] = None
    safety: float = 0.9
    symbol: str = "discrete"

    def __post_init__(self):
        if self.method not in ("explicit_rk4", "explicit_euler", "spectral_exact"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.symbol not in ("discrete", "continuum"):
            raise ValueError(f"unknown symbol {self.symbol!r}")


def stable_step(coeffs: LinearPdeCoefficients, method: str, safety: float = 0.9, T: float = 0.0) -> float:
    """Largest automatic time step.

    Diffusion sets the stability bound dx^2/(2 d c_max). Drift and source
    steps are kept at dx/|b| and 0.1/|a|, well inside the RK4 stability
    region, so that time error stays below the spatial error.
    """
    g = coeffs.grid
    limits = []
    cmax = float(np.max(np.abs(np.diag(coeffs.c))))
    if cmax > 0:
        limits.append(g.dx**2 / (2 * g.d * cmax))
    bsum = float(np.sum(np.abs(coeffs.b)))
    if bsum > 0:
        limits.append(g.dx / bsum)
    amax = max(coeffs.a_max(0.0), coeffs.a_max(T)) if coeffs.time_dependent else coeffs.a_max()
    if amax > 0:
        limits.append(0.1 / amax)
    return safety * min(limits) if limits else np.inf


def _rk4(coeffs, u, t, h):
    k1 = coeffs.rhs(u, t)
    k2 = coeffs.rhs(u + 0.5 * h * k1, t + 0.5 * h)
    k3 = coeffs.rhs(u + 0.5 * h * k2, t + 0.5 * h)
    k4 = coeffs.rhs(u + h * k3, t + h)
    return u + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(u0: Field, coeffs: LinearPdeCoefficients, T: float,
           cfg: Optional[IntegratorConfig] = None) -> Field:
    cfg = cfg or IntegratorConfig()
    if T == 0:
        return u0
    if cfg.method == "spectral_exact":
        if coeffs.time_dependent or not coeffs.constant_source:
            raise ValueError("spectral_exact needs constant coefficients")
        out = np.fft.ifftn(np.exp(T * coeffs.symbol(cfg.symbol)) * np.fft.fftn(u0.values))
        return u0.with_values(out if u0.is_complex else out.real)
    limit = stable_step(coeffs, cfg.method, cfg.safety, T)
    if cfg.h_t is None:
        n = max(1, int(np.ceil(T / limit - 1e-9))) if np.isfinite(limit) else 1
    else:
        if cfg.h_t > limit:
            raise CFLError(f"time step {cfg.h_t:.4g} exceeds the stability limit {limit:.4g}")
        n = max(1, int(np.ceil(T / cfg.h_t - 1e-9)))
    h = T / n
    u = u0.values.astype(complex if u0.is_complex else float)
    for i in range(n):
        if cfg.method == "explicit_rk4":
            u = _rk4(coeffs, u, i * h, h)
        else:
            u = u + h * coeffs.rhs(u, i * h)
        if not np.all(np.isfinite(u)):
            raise NumericalAbort(f"non-finite values at step {i + 1}", step=i + 1)
    return u0.with_values(u)


def coefficients_quadratic(problem: ProblemSpec, grid: Grid) -> LinearPdeCoefficients:
    """a = V/(2 nu), b = 0, c = nu I."""
    nu, V = problem.nu, problem.potential
    if V.time_dependent:
        a = lambda t: V.on_grid(grid, t) / (2 * nu)
    else:
        a = V.on_grid(grid) / (2 * nu)
    return LinearPdeCoefficients(grid, a, np.zeros(grid.d), nu * np.eye(grid.d))


def coefficients_general(problem: ProblemSpec, grid: Grid, mode: str = "empirical",
                         h: Optional[float] = None) -> LinearPdeCoefficients:
    """Drift and diffusion of the entropy scheme's continuum limit.

    ``mode`` is ``empirical`` (calibrated at step ``h``; small-h limit when
    None) or ``printed``. A non-zero potential enters as a = V/(2 nu), the
    rate matching the factor exp(h V/(2 nu)) of one scheme step.
    """
    cc = continuum_coefficients(problem.kinetic, problem.nu, h)
    if mode == "empirical":
        b, c = cc.b, cc.c
    elif mode == "printed":
        b, c = cc.mu, cc.nu_printed
    else:
        raise ValueError(f"unknown coefficient mode {mode!r}")
    V = problem.potential
    if V.time_dependent:
        raise ValueError("the general pipeline takes a time-independent potential")
    a = 0.0 if V.is_zero(grid) else V.on_grid(grid) / (2 * problem.nu)
    return LinearPdeCoefficients(grid, a, b, c)


def solve_S(problem: ProblemSpec, grid: Grid, T: float, cfg: Optional[IntegratorConfig] = None,
            pipeline: str = "quadratic", mode: str = "empirical", h: Optional[float] = None) -> Field:
    """S_nu(T) = inverse(evolve(forward(S0)))."""
    if pipeline == "quadratic":
        coeffs = coefficients_quadratic(problem, grid)
    elif pipeline == "general":
        coeffs = coefficients_general(problem, grid, mode, h)
    else:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    tc = colehopf.TransformConfig(problem.nu)
    u = evolve(colehopf.forward(problem.S0(grid), tc), coeffs, T, cfg)
    return colehopf.inverse(u, tc)
