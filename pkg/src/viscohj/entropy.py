"""Entropy-penalisation scheme: kernel, linear step, nonlinear G, Gibbs check, marching.

The velocity integral over x + h v is realised on the grid through the
substitution y = h v, so one step is a periodic correlation

    L[u](x) = sum_m w_m u(x + y_m),   y_m = m dx,

with weights w_m ~ exp(-h K(y_m / h) / (2 nu)) summed over periodic images.
The normalised operator L has unit-sum weights. The unnormalised operator
carries the prefactor Z = int exp(-h K(v) / (2 nu)) dv and the potential
factor exp(h V(x) / (2 nu)) of the Lagrangian K(v) - V(x), evaluated at the
output point x.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import colehopf
from .grid import Field, Grid
from .problems import (KineticSpec, PotentialSpec, ProblemError, ProblemSpec,
                       SchemeParams, velocity_moments)


class EntropyError(ArithmeticError):
    pass


class UnresolvedKernelWarning(RuntimeWarning):
    pass


def log_velocity_integral(K: KineticSpec, h: float, nu: float) -> float:
    """ln of int exp(-h K(v) / (2 nu)) dv; closed form for the quadratic families."""
    d = K.d
    if K.kind == "quadratic":
        return 0.5 * d * np.log(2 * np.pi * nu / h)
    if K.kind == "half_quadratic":
        return 0.5 * d * np.log(4 * np.pi * nu / h)
    if K.kind == "anisotropic":
        return 0.5 * d * np.log(2 * np.pi * nu / h) - 0.5 * np.log(np.linalg.det(K.M))
    R = K.radius_for(h, nu) * 1.05
    n = {1: 20001, 2: 601, 3: 101}[d]
    s = np.linspace(-R, R, n)
    mesh = np.stack(np.meshgrid(*([s] * d), indexing="ij"), axis=-1) + K.v_star
    lw = -h * K(mesh) / (2 * nu)
    m = lw.max()
    return float(m + np.log(np.sum(np.exp(lw - m))) + d * np.log(s[1] - s[0]))


def kernel_width(K: KineticSpec, h: float, nu: float) -> float:
    """Smallest standard deviation of the kernel in y = h v."""
    if K.kind in ("quadratic", "half_quadratic", "anisotropic"):
        return float(np.sqrt(2 * h * nu / np.linalg.eigvalsh(K.hessian).max()))
    _, cov = velocity_moments(K, h, nu)
    return float(h * np.sqrt(np.linalg.eigvalsh(cov).min()))


@dataclass
class EntropyKernel:
    grid: Grid
    h: float
    nu: float
    weights: np.ndarray  # unit-sum weights, indexed by offset m in FFT order
    log_weights: np.ndarray
    normalised: bool
    log_prefactor: float  # ln Z, used only by the unnormalised operator
    width: float
    resolvable: bool
    even: bool
    _symbol: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.log_prefactor))

    @property
    def symbol(self) -> np.ndarray:
        """Fourier multiplier of the correlation with the unit-sum weights."""
        if self._symbol is None:
            self._symbol = np.conj(np.fft.fftn(self.weights))
        return self._symbol

    def eigenvalues(self) -> np.ndarray:
        """Spectrum of the normalised circulant operator."""
        lam = self.symbol
        return lam.real if self.even else lam

    def offsets(self) -> tuple[np.ndarray, ...]:
        g = self.grid
        m = np.fft.fftfreq(g.n_x, d=1.0 / g.n_x)
        return tuple(np.meshgrid(*([m * g.dx] * g.d), indexing="ij"))


def build_kernel(problem: ProblemSpec, params: SchemeParams, grid: Grid,
                 normalised: bool = True) -> EntropyKernel:
    K, nu, h = problem.kinetic, problem.nu, params.h
    if K.d != grid.d:
        raise ProblemError("kinetic dimension does not match grid dimension")
    R = params.radius(K, nu)
    # the kernel support |y| <= h R must fit inside the images {-1, 0, 1}
    reach = h * (R + np.max(np.abs(K.v_star)))
    if reach > 1.5:
        raise EntropyError(f"kernel tail reaches |y| = {reach:.3g}, beyond the periodic images")
    offs = np.stack(np.meshgrid(*([np.fft.fftfreq(grid.n_x, d=1.0 / grid.n_x) * grid.dx] * grid.d),
                                indexing="ij"), axis=-1)
    logs = []
    for img in product((-1, 0, 1), repeat=grid.d):
        logs.append(-h * K((offs + np.asarray(img, float)) / h) / (2 * nu))
    lw = logsumexp(np.stack(logs), axis=0)
    lw = lw - logsumexp(lw)
    w = np.exp(lw)
    width = kernel_width(K, h, nu)
    resolvable = width >= grid.dx / 4
    if not resolvable:
        warnings.warn(f"kernel width {width:.3g} is below dx/4 = {grid.dx / 4:.3g}; "
                      "the step degenerates toward the identity", UnresolvedKernelWarning, stacklevel=2)
    return EntropyKernel(grid=grid, h=h, nu=nu, weights=w, log_weights=lw, normalised=normalised,
                         log_prefactor=log_velocity_integral(K, h, nu), width=width,
                         resolvable=resolvable, even=K.is_even)


def correlate(values: np.ndarray, kernel: EntropyKernel) -> np.ndarray:
    out = np.fft.ifftn(kernel.symbol * np.fft.fftn(values))
    return out if np.iscomplexobj(values) else out.real


def potential_factor(V: Optional[PotentialSpec], kernel: EntropyKernel, t: float = 0.0):
    if V is None or V.is_zero(kernel.grid):
        return None
    return np.exp(kernel.h * V.on_grid(kernel.grid, t) / (2 * kernel.nu))


def step_linear(u: Field, kernel: EntropyKernel, V: Optional[PotentialSpec] = None,
                t: float = 0.0) -> Field:
    """One application of L (normalised) or the unnormalised operator with potential."""
    if not np.all(np.isfinite(u.values)):
        raise EntropyError("non-finite input to the linear step")
    vfac = potential_factor(V, kernel, t)
    if kernel.normalised:
        if vfac is not None:
            raise EntropyError("the normalised operator has no potential term; "
                               "build the kernel with normalised=False")
        return u.with_values(correlate(u.values, kernel))
    out = kernel.prefactor * correlate(u.values, kernel)
    if vfac is not None:
        out = out * vfac
    return u.with_values(out)


def apply_G(S: Field, problem: ProblemSpec, params: SchemeParams, t: float = 0.0) -> Field:
    """G[S](x) = -2 nu ln int exp(-(h(K(v) - V(x)) + S(x + h v)) / (2 nu)) dv.

    Evaluated as a direct log-sum-exp over grid offsets, so no exponential
    of S is ever formed. This route shares no code with the FFT step.
    """
    grid = S.grid
    kern = build_kernel(problem, params, grid, normalised=False)
    nu = problem.nu
    a = -S.values / (2 * nu)
    axes = tuple(range(grid.d))
    offsets = [tuple(int(i) for i in m) for m in np.argwhere(np.isfinite(kern.log_weights))]

    def term(m):
        # contribution w_m exp(a(x + y_m)) in the log domain
        return kern.log_weights[m] + np.roll(a, tuple(-i for i in m), axis=axes)

    top = np.full(grid.shape, -np.inf)
    for m in offsets:
        top = np.maximum(top, term(m))
    acc = np.zeros(grid.shape)
    for m in offsets:
        acc += np.exp(term(m) - top)
    lse = top + np.log(acc)
    G = -2 * nu * (kern.log_prefactor + lse)
    if not problem.potential.is_zero(grid):
        G = G - params.h * problem.potential.on_grid(grid, t)
    return S.with_values(G)


def G_via_step(S: Field, problem: ProblemSpec, params: SchemeParams, t: float = 0.0) -> Field:
    """inverse(step_linear(forward(S))) with the unnormalised operator."""
    cfg = colehopf.TransformConfig(problem.nu)
    kern = build_kernel(problem, params, S.grid, normalised=False)
    return colehopf.inverse(step_linear(colehopf.forward(S, cfg), kern, problem.potential, t), cfg)


# dense velocity quadrature ------------------------------------------------------

def _velocity_grid(K: KineticSpec, h: float, nu: float, n: Optional[int], R: Optional[float]):
    d = K.d
    R = R if R is not None else K.radius_for(h, nu) * 1.05
    n = n or {1: 4001, 2: 301, 3: 61}[d]
    s = np.linspace(-R, R, n)
    mesh = np.stack(np.meshgrid(*([s] * d), indexing="ij"), axis=-1) + K.v_star
    return mesh.reshape(-1, d), (s[1] - s[0]) ** d


def _lagrangian_terms(S_fn: Callable, x, problem: ProblemSpec, h: float, v: np.ndarray, t: float):
    """h L(x, v) + S(x + h v) at the quadrature nodes; S_fn takes d coordinate arrays."""
    x = np.atleast_1d(np.asarray(x, float))
    Vx = float(problem.potential(*[np.asarray(xi) for xi in x], t=t))
    pts = x + h * v
    pts = (pts + 0.5) % 1.0 - 0.5
    Svals = np.asarray(S_fn(*[pts[:, k] for k in range(pts.shape[1])]), float)
    return h * (problem.kinetic(v) - Vx) + Svals


def quadrature_G(S_fn: Callable, x, problem: ProblemSpec, params: SchemeParams,
                 n: Optional[int] = None, t: float = 0.0) -> float:
    """G[S](x) by trapezoid quadrature over a dense velocity grid with off-grid S."""
    v, dv = _velocity_grid(problem.kinetic, params.h, problem.nu, n, params.R_v)
    a = -_lagrangian_terms(S_fn, x, problem, params.h, v, t) / (2 * problem.nu)
    m = a.max()
    return float(-2 * problem.nu * (m + np.log(np.sum(np.exp(a - m)) * dv)))


@dataclass
class GibbsCheck:
    value_at_gibbs: float
    value_of_G: float
    velocities: np.ndarray
    dv: float
    gibbs_density: np.ndarray
    functional: Callable = field(repr=False)


def gibbs_functional(gamma: np.ndarray, cost: np.ndarray, dv: float, nu: float) -> float:
    """int (h L + S(x + h v) + 2 nu ln gamma) gamma dv for a density sampled on the nodes."""
    g = np.asarray(gamma, float)
    pos = g > 0
    integrand = np.zeros_like(g)
    integrand[pos] = (cost[pos] + 2 * nu * np.log(g[pos])) * g[pos]
    return float(np.sum(integrand) * dv)


def gibbs_variational_check(S_fn: Callable, x_index, S_grid: Field, problem: ProblemSpec,
                            params: SchemeParams, n: Optional[int] = None, t: float = 0.0) -> GibbsCheck:
    """Functional at the Gibbs density versus G[S] at grid point ``x_index``.

    The Gibbs density is built by quadrature over velocities with S evaluated
    off grid through ``S_fn``; G comes from the grid log-sum-exp route.
    """
    grid = S_grid.grid
    idx = tuple(np.atleast_1d(x_index) % grid.n_x)
    x = grid.index_to_coord(np.asarray(idx))
    v, dv = _velocity_grid(problem.kinetic, params.h, problem.nu, n, params.R_v)
    cost = _lagrangian_terms(S_fn, x, problem, params.h, v, t)
    a = -cost / (2 * problem.nu)
    m = a.max()
    gam = np.exp(a - m)
    gam /= np.sum(gam) * dv
    F = lambda g: gibbs_functional(g, cost, dv, problem.nu)
    G = apply_G(S_grid, problem, params, t)
    return GibbsCheck(F(gam), float(G.values[idx]), v, dv, gam, F)


# marching --------------------------------------------------------------------------

@dataclass
class Checkpoint:
    step: int
    time: float
    u: Field  # stored amplitudes; the physical u is u * exp(log_scale)
    log_scale: float
    S_nu: Field  # renormalised value, comparable with the continuum solution
    S_D: Field  # value of the raw scheme including the velocity-integral prefactor
    n_clamped: int


@dataclass
class Trajectory:
    checkpoints: list
    kernel: EntropyKernel

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]


def march(problem: ProblemSpec, params: SchemeParams, grid: Grid,
          checkpoints: Optional[Sequence[int]] = None) -> Trajectory:
    """Time-march u^{n+1} = L[u^n] from u^0 = exp(-S0 / (2 nu)).

    With a potential the unnormalised operator is used and the amplitudes are
    rescaled every step; the accumulated log scale keeps S exact.
    """
    nu = problem.nu
    cfg = colehopf.TransformConfig(nu)
    N = params.n_steps
    want = set(range(N + 1)) if checkpoints is None else {int(c) for c in checkpoints} | {N}
    with_V = not problem.potential.is_zero(grid)
    kern = build_kernel(problem, params, grid, normalised=not with_V)
    u = colehopf.forward(problem.S0(grid), cfg)
    log_scale = 0.0
    n_prefactor = 0
    out = []

    def record(n):
        inv = colehopf.inverse_checked(u, cfg)
        S_nu = inv.S.values - 2 * nu * log_scale
        if with_V:
            # the unnormalised step multiplied by Z each time; undo for S_nu
            S_nu = S_nu + 2 * nu * n_prefactor * kern.log_prefactor
        S_D = S_nu - 2 * nu * n * kern.log_prefactor
        out.append(Checkpoint(n, n * params.h, u, log_scale, grid_field(grid, S_nu),
                              grid_field(grid, S_D), inv.n_clamped))

    if 0 in want:
        record(0)
    for n in range(N):
        u = step_linear(u, kern, problem.potential if with_V else None, t=n * params.h)
        if with_V:
            n_prefactor += 1
            m = float(np.max(np.abs(u.values)))
            if not (np.isfinite(m) and m > 0):
                raise EntropyError(f"march broke down at step {n + 1}")
            u = u.with_values(u.values / m)
            log_scale += np.log(m)
        if n + 1 in want:
            record(n + 1)
    return Trajectory(out, kern)


def grid_field(grid: Grid, values) -> Field:
    return Field(grid, np.asarray(values))


def fitted_diffusion(kernel: EntropyKernel) -> np.ndarray:
    """Per-axis diffusion read off one normalised step acting on the first Fourier mode."""
    g = kernel.grid
    out = np.zeros(g.d)
    for k in range(g.d):
        idx = [0] * g.d
        idx[k] = 1
        lam = kernel.symbol[tuple(idx)]
        out[k] = -np.log(abs(lam)) / (4 * np.pi**2 * kernel.h)
    return out


def gaussian_blur(u: Field, variance: float) -> Field:
    """Exact periodic Gaussian blur of per-coordinate variance ``variance``.

    Built from the sampled Gaussian on grid offsets with periodic images, as a
    single wide kernel (independent of the step count).
    """
    g = u.grid
    m = np.fft.fftfreq(g.n_x, d=1.0 / g.n_x) * g.dx
    w1 = np.zeros(g.n_x)
    for j in range(-3, 4):
        w1 += np.exp(-((m + j) ** 2) / (2 * variance))
    w1 /= w1.sum()
    lam1 = np.fft.fft(w1).real
    lam = lam1
    for _ in range(g.d - 1):
        lam = np.multiply.outer(lam, lam1)
    out = np.fft.ifftn(lam * np.fft.fftn(u.values))
    return u.with_values(out if np.iscomplexobj(u.values) else out.real)
