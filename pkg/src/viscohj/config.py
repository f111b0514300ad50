"""Run configuration schema and its translation into problem objects."""
from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field as PField, field_validator, model_validator

from . import problems as P
from .grid import make_grid


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KineticConfig(_Strict):
    kind: Literal["quadratic", "half_quadratic", "anisotropic", "quartic", "log_cosh", "tabulated"] = "half_quadratic"
    shift: Optional[List[float]] = None
    M: Optional[List[List[float]]] = None
    beta: float = 1.0
    nodes: Optional[List[float]] = None
    values: Optional[List[float]] = None


class PotentialConfig(_Strict):
    kind: Literal["zero", "constant", "cosine"] = "zero"
    value: float = 0.0
    amplitude: float = 1.0
    mode: int = 1


class InitialConfig(_Strict):
    kind: Literal["zero", "constant", "cosine_bump", "sine", "quadratic"] = "cosine_bump"
    value: float = 0.0
    amplitude: float = 1.0
    mode: int = 1


class ProblemConfig(_Strict):
    kinetic: KineticConfig = KineticConfig()
    potential: PotentialConfig = PotentialConfig()
    initial: InitialConfig = InitialConfig()


class GridConfig(_Strict):
    d: int = 1
    n_x: Optional[int] = 128

    @field_validator("d")
    @classmethod
    def _d(cls, v):
        if v not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        return v

    @field_validator("n_x")
    @classmethod
    def _n(cls, v):
        if v is not None and (v < 4 or v % 2):
            raise ValueError("n_x must be even and at least 4")
        return v


class SchemeConfig(_Strict):
    nu: Optional[float] = None
    h: Optional[float] = None
    T: float = 0.1
    eps: Optional[float] = None
    target: Literal["value", "gradient"] = "value"
    checkpoints: Optional[List[int]] = None

    @model_validator(mode="after")
    def _resolve(self):
        if self.eps is None and (self.nu is None or self.h is None):
            raise ValueError("give nu and h, or eps for automatic parameter selection")
        if self.nu is not None and self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.h is not None and self.h <= 0:
            raise ValueError("h must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.eps is not None and not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        return self


class ParabolicConfig(_Strict):
    method: Literal["explicit_rk4", "explicit_euler", "spectral_exact"] = "explicit_rk4"
    symbol: Literal["discrete", "continuum"] = "discrete"
    coefficients: Literal["quadratic", "general"] = "quadratic"
    mode: Literal["empirical", "printed"] = "empirical"
    h_t: Optional[float] = None


class SchrodConfig(_Strict):
    N_xi: Optional[int] = None
    L: Optional[float] = None
    R: Optional[float] = None


class PolyTerm(_Strict):
    coef: float
    powers: List[int]


class EstimatorConfig(_Strict):
    points: List[List[int]] = PField(default_factory=list)
    gradient_axes: List[int] = PField(default_factory=list)
    kappa: float = 0.05
    f_terms: List[PolyTerm] = PField(default_factory=list)
    min_value: bool = False


class ShotConfig(_Strict):
    shots: int = 10000
    delta: float = 0.05

    @field_validator("shots")
    @classmethod
    def _s(cls, v):
        if v < 1:
            raise ValueError("shots must be positive")
        return v


class RunConfig(_Strict):
    problem: ProblemConfig = ProblemConfig()
    grid: GridConfig = GridConfig()
    scheme: SchemeConfig
    pipeline: Literal["entropy_march", "parabolic", "schrod"] = "parabolic"
    parabolic: ParabolicConfig = ParabolicConfig()
    schrod: SchrodConfig = SchrodConfig()
    estimators: EstimatorConfig = EstimatorConfig()
    shots: Optional[ShotConfig] = None
    oracles: List[Literal["hopf_lax", "viscous_hj", "burgers"]] = PField(default_factory=list)
    output: Optional[str] = None
    seed: int = 0

    @model_validator(mode="after")
    def _dims(self):
        d = self.grid.d
        for p in self.estimators.points:
            if len(p) != d:
                raise ValueError(f"estimator point {p} does not have {d} indices")
        for t in self.estimators.f_terms:
            if len(t.powers) != d:
                raise ValueError(f"polynomial term {t.powers} does not have {d} powers")
        if any(k >= d or k < 0 for k in self.estimators.gradient_axes):
            raise ValueError("gradient axis out of range")
        if self.grid.n_x is None and self.scheme.eps is None:
            raise ValueError("n_x is required unless eps selects the mesh")
        return self


def load_config(path) -> RunConfig:
    data = yaml.safe_load(Path(path).read_text())
    return RunConfig.model_validate(data or {})


def resolved(cfg: RunConfig) -> dict:
    """Config with eps-driven parameters filled in; this is what the manifest records."""
    out = cfg.model_dump(mode="json")
    s = cfg.scheme
    if s.eps is not None:
        choice = P.select_parameters(s.eps, cfg.grid.d, s.target)
        out["scheme"]["nu"] = s.nu if s.nu is not None else choice.nu
        if s.h is None:
            # round h down so that T is an integer number of steps
            n = max(1, int(np.ceil(s.T / choice.h))) if s.T > 0 else 1
            out["scheme"]["h"] = s.T / n if s.T > 0 else choice.h
        if cfg.grid.n_x is None:
            n_x = int(np.ceil(1.0 / choice.dx))
            out["grid"]["n_x"] = max(4, n_x + (n_x % 2))
        out["scheme"]["selected"] = {"nu": choice.nu, "h": choice.h, "dx": choice.dx}
    return out


def build_kinetic(kc: KineticConfig, d: int) -> P.KineticSpec:
    table = (kc.nodes, kc.values) if kc.kind == "tabulated" else None
    return P.KineticSpec(kc.kind, d, shift=kc.shift, M=kc.M, beta=kc.beta, table=table)


def build_potential(pc: PotentialConfig) -> P.PotentialSpec:
    if pc.kind == "zero":
        return P.zero_potential()
    if pc.kind == "constant":
        return P.constant_potential(pc.value)
    return P.cosine_potential(pc.amplitude, pc.mode)


def build_initial(ic: InitialConfig):
    a, m = ic.amplitude, ic.mode
    if ic.kind == "zero":
        return lambda *x: np.zeros_like(x[0])
    if ic.kind == "constant":
        return lambda *x: np.full_like(x[0], ic.value)
    if ic.kind == "cosine_bump":
        return P.cosine_bump(a, m)
    if ic.kind == "sine":
        return lambda *x: a * sum(np.sin(2 * np.pi * m * xi) for xi in x)
    return lambda *x: a * sum(xi * xi for xi in x)


def build(cfg: RunConfig):
    """(resolved dict, ProblemSpec, Grid, SchemeParams)."""
    r = resolved(cfg)
    d = cfg.grid.d
    grid = make_grid(d, r["grid"]["n_x"])
    prob = P.ProblemSpec(build_kinetic(cfg.problem.kinetic, d), build_potential(cfg.problem.potential),
                         build_initial(cfg.problem.initial), float(r["scheme"]["nu"]))
    params = P.SchemeParams(float(r["scheme"]["h"]), float(cfg.scheme.T))
    return r, prob, grid, params


def polynomial(terms: List[PolyTerm]):
    def f(*x):
        out = np.zeros_like(x[0], dtype=float)
        for t in terms:
            out = out + t.coef * np.prod([xi**p for xi, p in zip(x, t.powers)], axis=0)
        return out
    return f
