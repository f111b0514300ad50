"""Estimators for S(x_a), grad S(x_a), S_min and f(x*) from the amplitudes u.

Each estimator runs in exact-expectation mode (probabilities read off the
statevector) or in shot mode, where outcome counts are drawn from a seeded
generator. The squared norm of u enters through a NormChannel: a Bernoulli
success flag with probability ``p_succ``, rescaled by ``scale`` so that
``|u|^2 = scale * p_succ``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import Field, apply_derivative


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class ShotPlan:
    shots: int
    seed: int = 0
    delta: float = 0.05

    def __post_init__(self):
        if self.shots < 1:
            raise EstimatorError("shots must be at least 1")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed).spawn(stream + 1)[stream])


@dataclass(frozen=True)
class NormChannel:
    p_succ: float
    scale: float

    @classmethod
    def from_recovery(cls, rec, u0_norm: float):
        return cls(rec.p_succ, u0_norm**2 / rec.tail_mass)

    @property
    def norm_sq(self) -> float:
        return self.scale * self.p_succ

    def sample(self, shots: int, rng) -> tuple[float, float]:
        """Estimated |u|^2 and its standard error from ``shots`` Bernoulli trials."""
        k = rng.binomial(shots, self.p_succ)
        p = k / shots
        se = np.sqrt(max(p * (1 - p), 1.0 / shots) / shots)
        return self.scale * p, self.scale * se


@dataclass
class EstimateReport:
    name: str
    estimate: float
    exact: float
    std_error: float = 0.0
    shots: int = 0
    budget: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _index(u: Field, x_a) -> tuple:
    return tuple(int(i) % u.grid.n_x for i in np.atleast_1d(x_a))


def _provenance(plan: Optional[ShotPlan], provenance: Optional[dict]) -> dict:
    out = dict(provenance or {})
    if plan is not None:
        out.setdefault("seed", plan.seed)
    return out


# S at a point -----------------------------------------------------------------------------

def value_at_point(u: Field, x_a, nu: float, plan: Optional[ShotPlan] = None,
                   norm: Optional[NormChannel] = None, provenance: Optional[dict] = None) -> EstimateReport:
    """S(x_a) = -nu ln(|u_a|^2/|u|^2) - nu ln |u|^2."""
    idx = _index(u, x_a)
    nsq = float(np.sum(np.abs(u.values) ** 2))
    p_a = float(np.abs(u.values[idx]) ** 2 / nsq)
    if p_a <= 0:
        raise EstimatorError("u vanishes at the query point")
    exact = -nu * np.log(p_a) - nu * np.log(nsq)
    rep = EstimateReport("value_at_point", exact, exact, provenance=_provenance(plan, provenance),
                         extra={"x_a": list(idx), "p_a": p_a, "norm_sq": nsq})
    if plan is None:
        return rep
    rng = plan.rng(0)
    k = rng.binomial(plan.shots, p_a)
    flags = []
    if norm is None:
        nsq_hat, nsq_se = nsq, 0.0
        flags.append("norm_exact")
    else:
        nsq_hat, nsq_se = norm.sample(plan.shots, plan.rng(1))
        if nsq_hat <= 0:
            flags.append("norm_zero_counts")
            nsq_hat = norm.scale / plan.shots
    if k == 0:
        flags.append("zero_counts_lower_bound")
        p_hat = 1.0 / plan.shots
    else:
        p_hat = k / plan.shots
    est = -nu * np.log(p_hat) - nu * np.log(nsq_hat)
    se = nu * np.sqrt((1 - p_hat) / (plan.shots * p_hat) + (nsq_se / nsq_hat) ** 2)
    rep.estimate, rep.std_error, rep.shots, rep.flags = float(est), float(se), plan.shots, flags
    rep.extra["counts"] = int(k)
    return rep


# gradient by weak measurement ---------------------------------------------------------------

def coupled_registers(u: Field, k: int, nu: float, kappa: float) -> tuple[np.ndarray, np.ndarray]:
    """exp(+-2 kappa nu D_k) u, the two sigma_x eigen-branches of exp(2i kappa nu P_k (x) sigma_x)."""
    g = u.grid
    kk = g.wavenumbers()[k]
    sym = 1j * np.sin(2 * np.pi * kk * g.dx) / g.dx
    fu = np.fft.fftn(u.values.astype(complex))
    plus = np.fft.ifftn(np.exp(2 * kappa * nu * sym) * fu)
    minus = np.fft.ifftn(np.exp(-2 * kappa * nu * sym) * fu)
    return plus, minus


@dataclass
class QubitProbeState:
    amp0: complex
    amp1: complex

    def expectations(self) -> tuple[float, float, float]:
        """(<sigma_x>, <sigma_y>, <sigma_z>)."""
        a, b = self.amp0, self.amp1
        c = np.conj(a) * b
        return float(2 * c.real), float(2 * c.imag), float(abs(a) ** 2 - abs(b) ** 2)


def probe_state(u: Field, x_a, k: int, nu: float, kappa: float) -> tuple[QubitProbeState, float]:
    """Post-selected ancilla qubit and the probability of landing on x_a."""
    idx = _index(u, x_a)
    plus, minus = coupled_registers(u, k, nu, kappa)
    a0 = 0.5 * (plus[idx] + minus[idx])
    a1 = 0.5 * (plus[idx] - minus[idx])
    nrm = np.sqrt(abs(a0) ** 2 + abs(a1) ** 2)
    phi = float(nrm**2 / np.sum(np.abs(u.values) ** 2))
    if phi == 0:
        raise EstimatorError("post-selection onto x_a has zero probability")
    return QubitProbeState(a0 / nrm, a1 / nrm), phi


def gradient_from_expectations(sx: float, sy: float, sz: float, kappa: float) -> tuple[float, float, float]:
    """(|g|, Re g, Im g) from the qubit expectations."""
    if sz <= -1 + 1e-12:
        raise EstimatorError("<sigma_z> at -1: the readout formula is singular")
    r = 2.0 / (1.0 + sz)
    mag = np.sqrt(max(r - 1.0, 0.0)) / kappa
    # sigma_x = -2 Re(kappa g)/(1 + kappa^2 |g|^2) and 1 + kappa^2 |g|^2 = 2/(1 + sigma_z)
    re = -sx * r / (2 * kappa)
    im = -sy * r / (2 * kappa)
    return float(mag), float(re), float(im)


def log_gradient(u: Field, x_a, k: int, nu: float) -> complex:
    """-2 nu (D_k u)(x_a)/u(x_a), the quantity the protocol targets."""
    idx = _index(u, x_a)
    return complex(-2 * nu * apply_derivative(u, k).values[idx] / u.values[idx])


def gradient_at_point(u: Field, x_a, k: int, nu: float, kappa: float, plan: Optional[ShotPlan] = None,
                      provenance: Optional[dict] = None) -> EstimateReport:
    if not 0 < kappa <= 0.2:
        raise EstimatorError("coupling kappa must lie in (0, 0.2]")
    q, phi = probe_state(u, x_a, k, nu, kappa)
    sx, sy, sz = q.expectations()
    mag, re, im = gradient_from_expectations(sx, sy, sz, kappa)
    ref = abs(log_gradient(u, x_a, k, nu))
    rep = EstimateReport("gradient_at_point", mag, mag, provenance=_provenance(plan, provenance),
                         extra={"re": re, "im": im, "sigma": [sx, sy, sz], "phi": phi,
                                "reference": ref, "kappa": kappa, "axis": k},
                         budget={"kappa_sq_bias_scale": kappa**2 * ref**3})
    if plan is None:
        return rep
    est_sig = []
    for stream, s in enumerate((sx, sy, sz)):
        n_up = plan.rng(stream).binomial(plan.shots, 0.5 * (1 + s))
        est_sig.append(2 * n_up / plan.shots - 1)
    try:
        mag_h, re_h, im_h = gradient_from_expectations(*est_sig, kappa)
    except EstimatorError:
        rep.flags.append("sigma_z_singular")
        mag_h, re_h, im_h = float("inf"), float("nan"), float("nan")
    # delta method through |g| = sqrt(2/(1+sz) - 1)/kappa
    var_sz = max(1 - sz * sz, 1.0 / plan.shots) / plan.shots
    dmag = 1.0 / (kappa * (1 + sz) ** 2 * max(np.sqrt(max(2 / (1 + sz) - 1, 0.0)), 1e-300))
    rep.estimate, rep.shots = mag_h, plan.shots
    rep.std_error = float(abs(dmag) * np.sqrt(var_sz))
    rep.extra.update(sigma_hat=est_sig, re_hat=re_h, im_hat=im_h,
                     preparations=int(np.ceil(3 * plan.shots / phi)))
    return rep


# S_min from the norm ---------------------------------------------------------------------------

def min_error_budget(nu: float, d: int) -> float:
    """sqrt(nu) d + nu d ln(1/nu)/4."""
    return np.sqrt(nu) * d + nu * d * np.log(1 / nu) / 4


def min_value(norm_sq: float, nu: float, n_x: int, d: int, plan: Optional[ShotPlan] = None,
              norm: Optional[NormChannel] = None, S_min: Optional[float] = None,
              provenance: Optional[dict] = None) -> EstimateReport:
    """-nu ln |u|^2 with |u|^2 = sum exp(-S/nu); lies within nu d ln n_x below S_min."""
    if not norm_sq > 0:
        raise EstimatorError("squared norm must be positive")
    exact = -nu * np.log(norm_sq)
    budget = {"eps_min": min_error_budget(nu, d), "lse_width": nu * d * np.log(n_x), "nu": nu, "d": d,
              "n_x": n_x}
    if S_min is not None:
        budget["bracket"] = [S_min - nu * d * np.log(n_x), S_min]
    rep = EstimateReport("min_value", exact, exact, budget=budget, provenance=_provenance(plan, provenance))
    if plan is None:
        return rep
    chan = norm or NormChannel(1.0, norm_sq)
    if norm is None:
        rep.flags.append("norm_exact")
        rep.estimate, rep.shots = exact, plan.shots
        return rep
    nsq, se = chan.sample(plan.shots, plan.rng(0))
    if nsq <= 0:
        rep.flags.append("zero_counts_lower_bound")
        nsq = chan.scale / plan.shots
    rep.estimate, rep.std_error, rep.shots = float(-nu * np.log(nsq)), float(nu * se / nsq), plan.shots
    return rep


def lse_min(S: Field, nu: float) -> float:
    """-nu ln sum exp(-S/nu), evaluated stably."""
    a = -S.values / nu
    m = np.max(a)
    return float(-nu * (m + np.log(np.sum(np.exp(a - m)))))


# f at the minimiser ------------------------------------------------------------------------------

def _moved(idx, axis, step, shape):
    p = list(idx)
    p[axis] = (p[axis] + step) % shape[axis]
    return tuple(p)


def _hessian_at(values: np.ndarray, idx: tuple, dx: float) -> np.ndarray:
    """Central-difference Hessian of a periodic grid array at one index."""
    d, sh = values.ndim, values.shape
    H = np.zeros((d, d))
    for i in range(d):
        H[i, i] = (values[_moved(idx, i, 1, sh)] - 2 * values[idx] + values[_moved(idx, i, -1, sh)]) / dx**2
        for j in range(i + 1, d):
            corner = lambda si, sj: values[_moved(_moved(idx, i, si, sh), j, sj, sh)]
            H[i, j] = H[j, i] = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4 * dx * dx)
    return H


def f_at_argmin(u: Field, f: Callable, nu: float, plan: Optional[ShotPlan] = None,
                provenance: Optional[dict] = None) -> EstimateReport:
    """sum f |u|^2 / sum |u|^2, with the Laplace correction and bias terms reported.

    ``f`` takes the d coordinate arrays and returns values on the grid.
    """
    g = u.grid
    fv = np.broadcast_to(np.asarray(f(*g.mesh()), float), g.shape)
    w = np.abs(u.values) ** 2
    w = w / w.sum()
    S = -2 * nu * np.log(np.maximum(np.abs(u.values), 1e-300))
    idx = np.unravel_index(np.argmin(S), S.shape)
    # averaging deviations from f at the argmin keeps constant f exact in floating point
    f0 = float(fv[idx])
    exact = f0 + float(np.sum((fv - f0) * w))
    unique = int(np.sum(S <= S[idx] + 1e-12 * max(1.0, abs(S[idx])))) == 1
    budget = {"bias_d_nu": g.d * nu, "bias_midpoint": 1.0 / (nu * g.n_x**2)}
    HS = _hessian_at(S, idx, g.dx)
    Hf = _hessian_at(fv, idx, g.dx)
    try:
        budget["laplace_correction"] = float(0.5 * nu * np.trace(Hf @ np.linalg.inv(HS)))
    except np.linalg.LinAlgError:
        pass
    rep = EstimateReport("f_at_argmin", exact, exact, budget=budget, provenance=_provenance(plan, provenance),
                         extra={"argmin": [int(i) for i in idx], "f_at_grid_argmin": float(fv[idx])})
    if not unique:
        rep.flags.append("argmin_not_unique")
    if plan is None:
        return rep
    counts = plan.rng(0).multinomial(plan.shots, w.ravel())
    est = f0 + float(counts @ (fv - f0).ravel() / plan.shots)
    var = float(np.sum(w * (fv - exact) ** 2))
    rep.estimate, rep.std_error, rep.shots = est, float(np.sqrt(var / plan.shots)), plan.shots
    return rep


# shot-cost curves ---------------------------------------------------------------------------------

@dataclass
class CostCurve:
    shots: np.ndarray
    rms_error: np.ndarray
    predicted_error: np.ndarray
    slope: float
    C: float
    delta: float

    def predicted_shots(self, eps: float) -> float:
        return self.C * np.log(1 / self.delta) / eps**2

    def rows(self):
        return [(int(s), float(e), float(p)) for s, e, p in zip(self.shots, self.rms_error, self.predicted_error)]


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def shot_cost_curve(estimator: Callable[[ShotPlan], EstimateReport], ladder: Sequence[int], repeats: int = 100,
                    seed: int = 0, delta: float = 0.05, anchor: int = 0) -> CostCurve:
    """RMS error over seeded repeats at each shot count, with the C ln(1/delta)/eps^2 curve fitted at one anchor."""
    ladder = np.asarray(sorted(ladder), int)
    base = np.random.SeedSequence(seed)
    rms = []
    for i, s in enumerate(ladder):
        seeds = base.spawn(len(ladder))[i].generate_state(repeats)
        errs = []
        for sd in seeds:
            rep = estimator(ShotPlan(int(s), int(sd), delta))
            errs.append(rep.estimate - rep.exact)
        rms.append(np.sqrt(np.mean(np.square(errs))))
    rms = np.asarray(rms)
    C = rms[anchor] ** 2 * ladder[anchor] / np.log(1 / delta)
    pred = np.sqrt(C * np.log(1 / delta) / ladder)
    return CostCurve(ladder, rms, pred, loglog_slope(ladder, rms), float(C), delta)
