"""Problem definitions: kinetic term K(v), potential V(x), initial data S0(x).

Also the Legendre-Fenchel conjugate, the Hamiltonian evaluator, the continuum
drift/diffusion coefficients of the entropy scheme, and parameter selection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

KINDS = ("quadratic", "half_quadratic", "anisotropic", "quartic", "log_cosh", "tabulated", "custom")

QUADRATIC_KINDS = ("quadratic", "half_quadratic", "anisotropic")

# exp(-37) < 1e-16: kernel tail cutoff used everywhere
TAIL_EXPONENT = 37.0


class ProblemError(ValueError):
    pass


class LegendreError(ProblemError):
    """The supremum sits on the truncation boundary of the velocity grid."""


class SingularDiffusionError(ProblemError):
    pass


@dataclass
class KineticSpec:
    """Convex, superlinear kinetic term K(v) on R^d.

    ``shift`` translates the built-in families, K(v) = K_0(v - shift).
    ``M`` is the positive-definite matrix of the anisotropic family;
    ``beta`` scales the log-cosh term of the ``log_cosh`` family
    K(v) = |v|^2/2 + beta * sum_i ln cosh(v_i).
    """

    kind: str
    d: int = 1
    shift: Optional[np.ndarray] = None
    M: Optional[np.ndarray] = None
    beta: float = 1.0
    fn: Optional[Callable] = None
    table: Optional[tuple] = None
    v_star_hint: Optional[np.ndarray] = None
    hessian_hint: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProblemError(f"unknown kinetic kind {self.kind!r}")
        self.shift = np.zeros(self.d) if self.shift is None else np.broadcast_to(
            np.asarray(self.shift, float), (self.d,)).copy()
        if self.kind == "anisotropic":
            M = np.atleast_2d(np.asarray(self.M, float))
            if M.shape != (self.d, self.d) or not np.allclose(M, M.T):
                raise ProblemError("anisotropic K needs a symmetric d x d matrix M")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ProblemError("anisotropic K needs a positive-definite M")
            self.M = M
        if self.kind == "custom" and self.fn is None:
            raise ProblemError("custom K needs an evaluator fn")
        if self.kind == "tabulated":
            if self.d != 1 or self.table is None:
                raise ProblemError("tabulated K needs a 1D table (nodes, values)")
            nodes, vals = (np.asarray(a, float) for a in self.table)
            if np.any(np.diff(nodes) <= 0):
                raise ProblemError("table nodes must increase")
            slopes = np.diff(vals) / np.diff(nodes)
            if np.any(np.diff(slopes) < -1e-10):
                raise ProblemError("tabulated K is not convex")
            self.table = (nodes, vals)

    # evaluation -----------------------------------------------------------
    def __call__(self, v) -> np.ndarray:
        """K at velocities ``v`` of shape (..., d).

        In 1D an array without a trailing unit axis is read as scalar velocities.
        """
        v = np.asarray(v, float)
        if self.d == 1 and not (v.ndim >= 2 and v.shape[-1] == 1):
            v = v[..., None]
        w = v - self.shift
        k = self.kind
        if k == "quadratic":
            return np.sum(w * w, axis=-1)
        if k == "half_quadratic":
            return 0.5 * np.sum(w * w, axis=-1)
        if k == "anisotropic":
            return np.einsum("...i,ij,...j->...", w, self.M, w)
        if k == "quartic":
            return np.sum(w * w, axis=-1) ** 2
        if k == "log_cosh":
            a = np.abs(w)
            # ln cosh(a) = a + ln(1 + e^{-2a}) - ln 2, stable for large a
            return 0.5 * np.sum(w * w, axis=-1) + self.beta * np.sum(
                a + np.log1p(np.exp(-2 * a)) - np.log(2.0), axis=-1)
        if k == "tabulated":
            return self._tabulated(w[..., 0])
        return np.asarray(self.fn(v), float)

    def _tabulated(self, w):
        nodes, vals = self.table
        out = np.interp(w, nodes, vals)
        lo, hi = nodes[0], nodes[-1]
        s_lo = (vals[1] - vals[0]) / (nodes[1] - nodes[0])
        s_hi = (vals[-1] - vals[-2]) / (nodes[-1] - nodes[-2])
        # beyond the table: last slope plus quadratic growth keeps K superlinear
        out = np.where(w < lo, vals[0] + s_lo * (w - lo) + (w - lo) ** 2, out)
        out = np.where(w > hi, vals[-1] + s_hi * (w - hi) + (w - hi) ** 2, out)
        return out

    @property
    def is_even(self) -> bool:
        if np.any(self.shift != 0):
            return False
        if self.kind in ("custom", "tabulated"):
            v = np.linspace(-3, 3, 61)[:, None] * np.ones(self.d)
            return bool(np.allclose(self(v), self(-v), rtol=1e-12, atol=1e-12))
        return True

    # minimiser and Hessian -------------------------------------------------
    @property
    def v_star(self) -> np.ndarray:
        if self.v_star_hint is not None:
            return np.asarray(self.v_star_hint, float)
        if self.kind in ("quadratic", "half_quadratic", "anisotropic", "quartic", "log_cosh"):
            return self.shift.copy()
        res = optimize.minimize(lambda v: float(self(v[None, :])[0]), np.zeros(self.d),
                                method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
        return res.x

    @property
    def hessian(self) -> np.ndarray:
        """D = Hessian of K at v*."""
        if self.hessian_hint is not None:
            return np.atleast_2d(np.asarray(self.hessian_hint, float))
        eye = np.eye(self.d)
        k = self.kind
        if k == "quadratic":
            return 2 * eye
        if k == "half_quadratic":
            return eye.copy()
        if k == "anisotropic":
            return 2 * self.M
        if k == "quartic":
            return np.zeros((self.d, self.d))
        if k == "log_cosh":
            return (1 + self.beta) * eye
        vs, e = self.v_star, 1e-4
        H = np.zeros((self.d, self.d))
        for i in range(self.d):
            for j in range(self.d):
                pp, pm, mp, mm = self(np.stack([vs + e * (eye[i] + eye[j]), vs + e * (eye[i] - eye[j]),
                                                vs - e * (eye[i] - eye[j]), vs - e * (eye[i] + eye[j])]))
                H[i, j] = (pp - pm - mp + mm) / (4 * e * e)
        return 0.5 * (H + H.T)

    def radius_for(self, h: float, nu: float) -> float:
        """Velocity radius R around v* with h*(K(v)-K(v*))/(2 nu) >= TAIL_EXPONENT on the axes."""
        vs = self.v_star
        k0 = float(self(vs[None, :])[0])
        R = 1.0
        for _ in range(200):
            pts = vs + R * np.concatenate([np.eye(self.d), -np.eye(self.d)])
            if np.min(self(pts) - k0) * h / (2 * nu) >= TAIL_EXPONENT:
                return R
            R *= 1.25
        raise ProblemError("kinetic term does not grow fast enough to truncate the kernel")

    def check_convex(self, R: float = 3.0, n: int = 121) -> float:
        """Smallest discrete second difference of K along each axis over [-R, R]."""
        s = np.linspace(-R, R, n)
        worst = np.inf
        for i in range(self.d):
            v = np.zeros((n, self.d))
            v[:, i] = s
            v += self.shift
            k = self(v)
            worst = min(worst, float(np.min(k[2:] - 2 * k[1:-1] + k[:-2])))
        return worst


def quadratic(d=1, shift=None):
    return KineticSpec("quadratic", d, shift=shift)


def half_quadratic(d=1, shift=None):
    return KineticSpec("half_quadratic", d, shift=shift)


@dataclass
class PotentialSpec:
    """Potential V(x) on the torus; ``fn(*coords)`` or ``fn(t, *coords)`` when time dependent."""

    fn: Callable
    name: str = "custom"
    time_dependent: bool = False
    semiconvexity: Optional[float] = None
    zero: bool = False

    def __call__(self, *coords, t: float = 0.0):
        if self.time_dependent:
            return np.asarray(self.fn(t, *coords), float)
        return np.asarray(self.fn(*coords), float)

    def on_grid(self, grid, t: float = 0.0) -> np.ndarray:
        vals = np.broadcast_to(self(*grid.mesh(), t=t), grid.shape).astype(float)
        if not np.all(np.isfinite(vals)):
            raise ProblemError("potential is not finite on the grid")
        return vals

    def v_max(self, grid, t: float = 0.0) -> float:
        return float(np.max(np.abs(self.on_grid(grid, t))))

    def is_zero(self, grid) -> bool:
        return self.zero or not np.any(self.on_grid(grid))


def zero_potential():
    return PotentialSpec(lambda *x: np.zeros_like(x[0]), "zero", zero=True)


def constant_potential(V0: float):
    return PotentialSpec(lambda *x: np.full_like(x[0], float(V0)), "constant")


def cosine_potential(amplitude: float, mode: int = 1):
    """V(x) = amplitude * sum_k cos(2 pi mode x_k)."""
    return PotentialSpec(lambda *x: amplitude * sum(np.cos(2 * np.pi * mode * xi) for xi in x),
                         "cosine")


@dataclass
class ProblemSpec:
    kinetic: KineticSpec
    potential: PotentialSpec
    initial: Callable
    nu: float
    name: str = "problem"

    def __post_init__(self):
        if not self.nu > 0:
            raise ProblemError(f"viscosity must be positive, got {self.nu}")

    @property
    def d(self) -> int:
        return self.kinetic.d

    def S0(self, grid):
        from .grid import Field, field_from_function

        f = field_from_function(grid, self.initial)
        if not np.all(np.isfinite(f.values)):
            raise ProblemError("initial data is not finite on the grid")
        return Field(grid, f.values.astype(float))

    def hamiltonian(self, x, p) -> float:
        return hamiltonian_of(self.kinetic, self.potential, x, p)


def cosine_bump(amplitude: float = 1.0, mode: int = 1):
    """S0(x) = amplitude * sum_k (1 - cos(2 pi mode x_k))."""
    return lambda *x: amplitude * sum(1 - np.cos(2 * np.pi * mode * xi) for xi in x)


@dataclass
class SchemeParams:
    h: float
    T: float
    R_v: Optional[float] = None
    n_quad: int = 4001

    def __post_init__(self):
        if not self.h > 0:
            raise ProblemError("time step must be positive")
        if self.T < 0:
            raise ProblemError("final time must be nonnegative")
        n = self.n_steps
        if abs(n * self.h - self.T) > 1e-12:
            raise ProblemError(f"T={self.T} is not an integer multiple of h={self.h}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))

    def radius(self, kinetic: KineticSpec, nu: float) -> float:
        R = kinetic.radius_for(self.h, nu)
        if self.R_v is not None:
            if self.R_v < R:
                raise ProblemError(f"velocity radius {self.R_v} leaves kernel tail above 1e-16; need {R:.4g}")
            return self.R_v
        return R


# Legendre-Fenchel -------------------------------------------------------------

_DENSE_POINTS = {1: 20001, 2: 401, 3: 61}


def legendre_transform(K: KineticSpec, p, R: Optional[float] = None, tol: float = 1e-8) -> float:
    """sup_v (p.v - K(v)) by dense grid search plus a local polish."""
    p = np.atleast_1d(np.asarray(p, float))
    d = K.d
    if p.shape != (d,):
        raise ProblemError(f"momentum has shape {p.shape}, expected ({d},)")
    if R is None:
        R = 4.0 * (1.0 + np.max(np.abs(p)) + np.max(np.abs(K.shift)))
    n = _DENSE_POINTS[d]
    s = np.linspace(-R, R, n)
    mesh = np.stack(np.meshgrid(*([s] * d), indexing="ij"), axis=-1)
    vals = mesh @ p - K(mesh)
    idx = np.unravel_index(np.argmax(vals), vals.shape)
    if any(i in (0, n - 1) for i in idx):
        raise LegendreError(f"supremum at truncation boundary R={R}; enlarge the velocity range")
    v0 = mesh[idx]
    obj = lambda v: -(float(np.dot(p, v)) - float(K(np.atleast_1d(v)[None, :])[0]))
    if d == 1:
        step = s[1] - s[0]
        res = optimize.minimize_scalar(lambda t: obj(np.array([t])), method="golden",
                                       bracket=(v0[0] - step, v0[0], v0[0] + step), tol=tol)
        best = -res.fun
    else:
        res = optimize.minimize(obj, v0, method="Nelder-Mead",
                                options={"xatol": tol, "fatol": 1e-15, "maxiter": 20000})
        best = -res.fun
    return float(max(best, vals[idx]))


def hamiltonian_of(K: KineticSpec, V: PotentialSpec, x, p, t: float = 0.0) -> float:
    """H(x, p) = sup_v(-p.v - K(v) + V(x)) = K*(-p) + V(x)."""
    x = np.atleast_1d(np.asarray(x, float))
    Vx = float(V(*[np.asarray(xi) for xi in x], t=t))
    return legendre_transform(K, -np.atleast_1d(np.asarray(p, float))) + Vx


# continuum coefficients --------------------------------------------------------

@dataclass
class ContinuumCoefficients:
    """Drift and diffusion of the continuum limit of the entropy scheme.

    ``mu``/``nu_printed`` follow v*_j v*_k + 2 nu (D^-1)_jk; ``b``/``c`` are the
    calibrated values matching one normalised step: b = E[v], c = h Cov(v)/2
    under the velocity law P(v) ~ exp(-h K(v) / (2 nu)). ``h=None`` means the
    h-independent values b = v*, c = nu D^-1, exact only for the quadratic
    families: otherwise the law spreads over |v| ~ (nu/h)^(1/2), where K is no
    longer described by its Hessian at v*.
    """

    mu: np.ndarray
    nu_printed: np.ndarray
    b: np.ndarray
    c: np.ndarray
    h: Optional[float] = None
    extra: dict = field(default_factory=dict)


def velocity_moments(K: KineticSpec, h: float, nu: float, n_per_dim: Optional[int] = None):
    """Mean and covariance of P(v) ~ exp(-h K(v)/(2 nu)) by tensor trapezoid quadrature."""
    d = K.d
    vs = K.v_star
    R = K.radius_for(h, nu) * 1.05
    n = n_per_dim or {1: 8001, 2: 401, 3: 81}[d]
    s = np.linspace(-R, R, n)
    mesh = np.stack(np.meshgrid(*([s] * d), indexing="ij"), axis=-1) + vs
    logw = -h * K(mesh) / (2 * nu)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    pts = mesh.reshape(-1, d)
    w = w.ravel()
    mean = w @ pts
    cen = pts - mean
    cov = (cen * w[:, None]).T @ cen
    return mean, 0.5 * (cov + cov.T)


def continuum_coefficients(K: KineticSpec, nu: float, h: Optional[float] = None) -> ContinuumCoefficients:
    D = K.hessian
    eig = np.linalg.eigvalsh(D)
    if eig.min() <= 1e-12 * max(1.0, abs(eig.max())):
        raise SingularDiffusionError(f"Hessian of K at v* is singular (eigenvalues {eig})")
    Dinv = np.linalg.inv(D)
    vs = K.v_star
    printed = np.outer(vs, vs) + 2 * nu * Dinv
    if h is None:
        if K.kind not in QUADRATIC_KINDS:
            raise ProblemError(f"kind {K.kind!r} needs a calibration step h")
        b, c = vs.copy(), nu * Dinv
    else:
        mean, cov = velocity_moments(K, h, nu)
        b, c = mean, 0.5 * h * cov
    return ContinuumCoefficients(mu=vs.copy(), nu_printed=printed, b=b, c=c, h=h)


# parameter selection -----------------------------------------------------------

@dataclass(frozen=True)
class ParameterChoice:
    nu: float
    h: float
    dx: float
    target: str


def select_parameters(eps: float, d: int, target: str = "value") -> ParameterChoice:
    """Viscosity, time step and mesh size for precision ``eps``; all constants 1."""
    if not 0 < eps < 1:
        raise ProblemError("precision must lie in (0, 1)")
    if d < 1:
        raise ProblemError("dimension must be positive")
    nu = (eps / d) ** 2
    if target == "value":
        return ParameterChoice(nu, eps ** (8 / 3) / d ** (10 / 3), (eps / d) ** 0.5, target)
    if target == "gradient":
        return ParameterChoice(nu, eps**4 / d**5, eps / d**1.5, target)
    raise ProblemError(f"unknown target {target!r}")
