"""Independent references: Hopf-Lax minimisation, direct viscous HJ and Burgers solvers, exact heat flow.

None of these routes goes through the Cole-Hopf transform or the entropy
kernel, so agreement with the linear pipelines is a genuine cross-check.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from . import fieldio
from .grid import Field, Grid, make_grid
from .parabolic import LinearPdeCoefficients, NumericalAbort
from .problems import KineticSpec, PotentialSpec, ProblemSpec, legendre_transform


class OracleError(RuntimeError):
    pass


@dataclass
class OracleResult:
    field: Field
    method: str
    resolution: dict
    self_error: float = float("nan")
    extra: dict = field(default_factory=dict)


# caching -----------------------------------------------------------------------

def cache_key(payload: dict) -> str:
    return fieldio.content_hash(payload)


def cached(payload: dict, compute: Callable[[], OracleResult], cache_dir=None) -> OracleResult:
    """Return a cached OracleResult keyed by a content hash of ``payload``."""
    if cache_dir is None:
        return compute()
    root = Path(cache_dir)
    key = cache_key(payload)
    fpath, mpath = root / f"{key}.field", root / f"{key}.json"
    if fpath.exists() and mpath.exists():
        meta = json.loads(mpath.read_text())
        return OracleResult(fieldio.read_field(fpath), meta["method"], meta["resolution"],
                            float(meta["self_error"]), meta.get("extra", {}))
    res = compute()
    root.mkdir(parents=True, exist_ok=True)
    fieldio.write_field(res.field, fpath)
    fieldio.write_json({"method": res.method, "resolution": res.resolution,
                        "self_error": res.self_error, "extra": res.extra, "payload": payload}, mpath)
    return res


def fingerprint(fn: Callable, d: int, n: int = 64) -> list:
    """Samples of a coordinate function, used to key caches by content."""
    g = make_grid(d, n)
    return np.round(np.asarray(fn(*g.mesh()), float).ravel(), 14).tolist()


# Hopf-Lax --------------------------------------------------------------------------

def _hopf_lax_1d(S0, K, t, x, n_search, images, polish):
    y = -0.5 + np.arange(n_search) / n_search
    ys = np.concatenate([y + j for j in range(-images, images + 1)])
    S0y = S0(ys)
    out = np.empty_like(x)
    step = 1.0 / n_search
    lo, hi = ys[0], ys[-1]
    for i, xi in enumerate(x):
        vals = S0y + t * K((ys - xi) / t)
        j = int(np.argmin(vals))
        if j == 0 or j == len(ys) - 1:
            raise OracleError("minimiser at the image-search boundary")
        best = vals[j]
        if polish:
            obj = lambda yy: float(S0(np.array([yy]))[0] + t * K(np.array([(yy - xi) / t]))[0])
            res = optimize.minimize_scalar(obj, bounds=(max(lo, ys[j] - step), min(hi, ys[j] + step)),
                                           method="bounded", options={"xatol": 1e-12})
            best = min(best, res.fun)
        out[i] = best
    return out


def _hopf_lax_nd(S0, K, t, pts, n_search, images, polish):
    d = pts.shape[1]
    y1 = -0.5 + np.arange(n_search) / n_search
    base = np.stack(np.meshgrid(*([y1] * d), indexing="ij"), axis=-1).reshape(-1, d)
    ys = np.concatenate([base + np.asarray(s, float) for s in product(range(-images, images + 1), repeat=d)])
    S0y = S0(*[ys[:, k] for k in range(d)])
    out = np.empty(len(pts))
    reach = images + 0.5 - 1.0 / n_search
    for i, xi in enumerate(pts):
        vals = S0y + t * K((ys - xi) / t)
        j = int(np.argmin(vals))
        if np.any(np.abs(ys[j]) >= reach):
            raise OracleError("minimiser at the image-search boundary")
        best = vals[j]
        if polish:
            obj = lambda yy: float(np.asarray(S0(*[np.array([c]) for c in yy])).ravel()[0]
                                   + t * K(((yy - xi) / t)[None, :])[0])
            res = optimize.minimize(obj, ys[j], method="Nelder-Mead",
                                    options={"xatol": 1e-10, "fatol": 1e-14})
            best = min(best, res.fun)
        out[i] = best
    return out


def hopf_lax(S0: Callable, K: KineticSpec, t: float, grid_eval: Grid, n_search: int = 4096,
             images: int = 1, polish: bool = True, self_check: bool = True, cache_dir=None) -> OracleResult:
    """S(t, x) = min_y [S0(y) + t K((y - x)/t)] on the torus, V = 0.

    The search grid covers the periodic images y + j, j in {-images..images}^d,
    and widens automatically when the minimiser lands on its edge.
    """
    if t <= 0:
        raise OracleError("Hopf-Lax needs t > 0")
    d = grid_eval.d

    def run(ns, im):
        while True:
            try:
                if d == 1:
                    return _hopf_lax_1d(lambda y: np.asarray(S0(y), float), K, t, grid_eval.coords_1d,
                                        ns, im, polish)
                return _hopf_lax_nd(S0, K, t, grid_eval.points(), ns, im, polish)
            except OracleError:
                im += 1
                if im > 4:
                    raise

    def compute():
        vals = run(n_search, images)
        err = float(np.max(np.abs(vals - run(n_search // 2, images)))) if self_check else float("nan")
        return OracleResult(Field(grid_eval, vals.reshape(grid_eval.shape)), "hopf_lax",
                            {"n_eval": grid_eval.n_x, "n_search": n_search, "images": images}, err)

    payload = {"oracle": "hopf_lax", "S0": fingerprint(S0, d), "K": _kinetic_key(K), "t": t,
               "d": d, "n_x": grid_eval.n_x, "n_search": n_search, "polish": polish}
    return cached(payload, compute, cache_dir)


def _kinetic_key(K: KineticSpec):
    v = np.linspace(-3, 3, 61)[:, None] * np.ones(K.d)
    return np.round(K(v), 14).tolist()


# direct viscous Hamilton-Jacobi --------------------------------------------------

def gaussian_second_moment_constant(d: int) -> float:
    """a = int e^{-|w|^2}|w|^2 dw / (2 int e^{-|w|^2} dw) over R^d, by radial quadrature."""
    num = integrate.quad(lambda r: np.exp(-r * r) * r ** (d + 1), 0, np.inf, epsabs=1e-14)[0]
    den = integrate.quad(lambda r: np.exp(-r * r) * r ** (d - 1), 0, np.inf, epsabs=1e-14)[0]
    return num / (2 * den)


class _TabulatedHamiltonian:
    """H(p) - V = K*(-p) tabulated from the Legendre evaluator, cubic-spline interpolated (1D)."""

    def __init__(self, K: KineticSpec, pmax: float, n: int = 801):
        self.p = np.linspace(-pmax, pmax, n)
        self.vals = np.array([legendre_transform(K, -pi) for pi in self.p])
        self.spline = CubicSpline(self.p, self.vals)
        self.pmax = pmax
        self.slope = float(np.max(np.abs(self.spline(self.p, 1))))

    def __call__(self, p):
        if np.max(np.abs(p)) > self.pmax:
            raise NumericalAbort("gradient left the tabulated Hamiltonian range")
        return self.spline(p)


def _analytic_conjugate(K: KineticSpec):
    """K*(-p) for the quadratic families in any dimension."""
    s = K.shift
    if K.kind == "quadratic":
        return lambda p: np.sum(p * p, axis=-1) / 4 - p @ s
    if K.kind == "half_quadratic":
        return lambda p: np.sum(p * p, axis=-1) / 2 - p @ s
    if K.kind == "anisotropic":
        Minv = np.linalg.inv(K.M)
        return lambda p: np.einsum("...i,ij,...j->...", p, Minv, p) / 4 - p @ s
    raise OracleError(f"no multi-dimensional Hamiltonian available for kind {K.kind!r}")


def _central_grad(S: np.ndarray, dx: float):
    return np.stack([(np.roll(S, -1, k) - np.roll(S, 1, k)) / (2 * dx) for k in range(S.ndim)], axis=-1)


def _laplace(S: np.ndarray, dx: float):
    return sum((np.roll(S, -1, k) - 2 * S + np.roll(S, 1, k)) / dx**2 for k in range(S.ndim))


def viscous_hj_direct(problem: ProblemSpec, grid: Grid, T: float, mode: str = "quadratic",
                      safety: float = 0.4, self_check: bool = True, cache_dir=None) -> OracleResult:
    """Explicit RK4 for S_t = -H(x, grad S) + coeff Lap S with central differences.

    ``mode`` is ``quadratic`` (coeff = nu) or ``general`` (coeff = 2 a nu).
    """
    if mode == "quadratic":
        coeff = problem.nu
    elif mode == "general":
        coeff = 2 * gaussian_second_moment_constant(grid.d) * problem.nu
    else:
        raise OracleError(f"unknown mode {mode!r}")

    def solve(g: Grid):
        S = problem.S0(g).values.copy()
        V = problem.potential
        grad0 = _central_grad(S, g.dx)
        pmax = 2.0 * float(np.max(np.abs(grad0))) + 2.0
        if g.d == 1:
            Hk = _TabulatedHamiltonian(problem.kinetic, pmax)
            kin, slope = (lambda p: Hk(p[..., 0])), Hk.slope
        else:
            kin = _analytic_conjugate(problem.kinetic)
            pp = np.linspace(-pmax, pmax, 201)
            slope = float(np.max(np.abs(np.gradient(kin(pp[:, None] * np.ones(g.d)), pp))))
        Vt = (lambda t: V.on_grid(g, t)) if V.time_dependent else (lambda t, _v=V.on_grid(g): _v)

        def rhs(S, t):
            return -(kin(_central_grad(S, g.dx)) + Vt(t)) + coeff * _laplace(S, g.dx)

        lim = [g.dx / max(slope, 1e-12)]
        if coeff > 0:
            lim.append(g.dx**2 / (2 * g.d * coeff))
        n = max(1, int(np.ceil(T / (safety * min(lim)))))
        h = T / n
        for i in range(n):
            t = i * h
            k1 = rhs(S, t)
            k2 = rhs(S + 0.5 * h * k1, t + 0.5 * h)
            k3 = rhs(S + 0.5 * h * k2, t + 0.5 * h)
            k4 = rhs(S + h * k3, t + h)
            S = S + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(S)):
                raise NumericalAbort(f"viscous HJ solve blew up at step {i + 1}", step=i + 1)
        return S, n

    def compute():
        S, n = solve(grid)
        err = float("nan")
        if self_check:
            Sc, _ = solve(make_grid(grid.d, grid.n_x // 2))
            err = float(np.max(np.abs(S[(slice(None, None, 2),) * grid.d] - Sc)))
        return OracleResult(Field(grid, S), f"viscous_hj_{mode}",
                            {"n_x": grid.n_x, "steps": n, "coeff": coeff}, err)

    payload = {"oracle": "viscous_hj", "mode": mode, "S0": fingerprint(problem.initial, grid.d),
               "K": _kinetic_key(problem.kinetic), "nu": problem.nu, "T": T, "n_x": grid.n_x,
               "d": grid.d, "V": None if problem.potential.time_dependent else fingerprint(problem.potential, grid.d)}
    if problem.potential.time_dependent:
        cache_dir = None
    return cached(payload, compute, cache_dir)


# forced Burgers ------------------------------------------------------------------

def burgers_direct(R0: Field, V: Optional[PotentialSpec], nu: float, T: float,
                   R0_fn: Optional[Callable] = None, safety: float = 0.4,
                   self_check: bool = True) -> OracleResult:
    """R_t + (R^2/2)_x + V_x = nu R_xx, conservative central fluxes and RK4 (1D).

    The half-resolution rerun needs the initial data at the coarse points; it
    subsamples ``R0`` unless ``R0_fn`` is given.
    """
    g = R0.grid
    if g.d != 1:
        raise OracleError("burgers_direct is one-dimensional")

    def solve(R, gg: Grid):
        dx = gg.dx
        Vx = np.zeros(gg.n_x)
        if V is not None and not V.is_zero(gg):
            Vv = V.on_grid(gg)
            Vx = (np.roll(Vv, -1) - np.roll(Vv, 1)) / (2 * dx)

        def rhs(R):
            F = 0.5 * R * R
            return (-(np.roll(F, -1) - np.roll(F, 1)) / (2 * dx) - Vx
                    + nu * (np.roll(R, -1) - 2 * R + np.roll(R, 1)) / dx**2)

        rmax = float(np.max(np.abs(R))) + np.sqrt(2 * float(np.max(np.abs(Vx))) * T + 1e-300) + 1e-12
        lim = [dx / rmax]
        if nu > 0:
            lim.append(dx * dx / (2 * nu))
        n = max(1, int(np.ceil(T / (safety * min(lim)))))
        h = T / n
        R = R.astype(float).copy()
        for i in range(n):
            k1 = rhs(R)
            k2 = rhs(R + 0.5 * h * k1)
            k3 = rhs(R + 0.5 * h * k2)
            k4 = rhs(R + h * k3)
            R = R + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(R)):
                raise NumericalAbort(f"Burgers solve blew up at step {i + 1}", step=i + 1)
        return R, n

    R, n = solve(R0.values, g)
    err = float("nan")
    if self_check:
        gc = make_grid(1, g.n_x // 2)
        Rc0 = np.asarray(R0_fn(gc.coords_1d), float) if R0_fn is not None else R0.values[::2]
        Rc, _ = solve(Rc0, gc)
        err = float(np.linalg.norm(R[::2] - Rc))
    return OracleResult(Field(g, R), "burgers_direct", {"n_x": g.n_x, "steps": n}, err)


# exact heat flow -------------------------------------------------------------------

def heat_exact(u0: Field, coeffs: LinearPdeCoefficients, T: float) -> OracleResult:
    """Exact Fourier-multiplier solution for constant a, b, c."""
    if not coeffs.constant_source:
        raise OracleError("heat_exact needs a constant source")
    g = u0.grid
    k = np.fft.fftfreq(g.n_x, d=1.0 / g.n_x)
    ks = np.meshgrid(*([k] * g.d), indexing="ij")
    a = coeffs.a_scalar()
    expo = np.full(g.shape, a, dtype=complex)
    for j in range(g.d):
        kj_odd = np.where(np.abs(ks[j]) == g.n_x // 2, 0.0, ks[j])
        expo = expo + 2j * np.pi * coeffs.b[j] * kj_odd
        for l in range(g.d):
            expo = expo - 4 * np.pi**2 * coeffs.c[j, l] * (ks[j] if j == l else kj_odd) * \
                (ks[l] if j == l else np.where(np.abs(ks[l]) == g.n_x // 2, 0.0, ks[l]))
    out = np.fft.ifftn(np.exp(T * expo) * np.fft.fftn(u0.values))
    return OracleResult(u0.with_values(out if u0.is_complex else out.real), "heat_exact",
                        {"n_x": g.n_x}, 0.0)
