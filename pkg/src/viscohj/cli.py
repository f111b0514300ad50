"""Command-line driver: run, sweep, oracle, report.

Exit codes: 0 success, 2 invalid configuration, 3 numerical abort.
Every output is deterministic for a fixed config and seed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__, colehopf, entropy, fieldio, observables as obs, oracles, parabolic, schrod
from .config import RunConfig, build, load_config, polynomial
from .grid import Field, GridError, make_grid
from .problems import ProblemError, SchemeParams

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
AXES = ("h", "nu", "dx", "kappa", "shots")
ALIASES = {"ν": "nu", "Δx": "dx", "κ": "kappa"}
SWEEP_ORACLE = {"h": "continuum parabolic solve", "nu": "hopf_lax", "dx": "heat_exact",
                "kappa": "exact log-gradient", "shots": "exact-mode estimate"}
# least-squares slope the theory predicts for each sweep axis (low, high)
PREDICTED = {"h": (1.0, 1.0), "nu": (0.5, 1.0), "dx": (2.0, 2.0), "kappa": (2.0, 2.0), "shots": (-0.5, -0.5)}


class ConfigError(ValueError):
    pass


# pipelines -----------------------------------------------------------------------------------

def run_pipeline(cfg: RunConfig, prob, grid, params) -> dict:
    """Returns dict with u (Field), S (Field) and pipeline metadata."""
    T = cfg.scheme.T
    tc = colehopf.TransformConfig(prob.nu)
    if cfg.pipeline == "entropy_march":
        traj = entropy.march(prob, params, grid, cfg.scheme.checkpoints or [])
        fin = traj.final
        return {"u": fin.u, "S": fin.S_nu, "S_D": fin.S_D, "log_scale": fin.log_scale, "trajectory": traj,
                "meta": {"steps": params.n_steps, "h": params.h, "kernel_width": traj.kernel.width,
                         "kernel_resolvable": bool(traj.kernel.resolvable), "log_scale": fin.log_scale,
                         "clamped": fin.n_clamped}}
    coeffs = _coefficients(cfg, prob, grid, params)
    u0 = colehopf.forward(prob.S0(grid), tc)
    if cfg.pipeline == "parabolic":
        pc = cfg.parabolic
        u = parabolic.evolve(u0, coeffs, T, parabolic.IntegratorConfig(pc.method, pc.h_t, symbol=pc.symbol))
        inv = colehopf.inverse_checked(u, tc)
        return {"u": u, "S": inv.S, "meta": {"method": pc.method, "clamped": inv.n_clamped}}
    op = schrod.assemble_A(coeffs, seed=cfg.seed)
    sc = cfg.schrod
    if sc.L is None or sc.R is None:
        auto = schrod.default_ancilla(op, T, u0, sc.N_xi)
        anc = schrod.AncillaGrid(sc.L or auto.L, sc.R or auto.R, auto.N)
    else:
        anc = schrod.AncillaGrid(sc.L, sc.R, sc.N_xi or 64)
    state = schrod.schrod_evolve(u0, op, anc, T)
    rec = schrod.recover(state)
    inv = colehopf.inverse_checked(rec.u, tc)
    n1, n2 = op.norms()
    return {"u": rec.u, "S": inv.S, "recovery": rec, "state": state, "u0_norm": u0.norm_l2(),
            "meta": {"xi_star": rec.xi_star, "p_succ": rec.p_succ, "tail_mass": rec.tail_mass,
                     "norm_estimate": rec.norm_estimate, "L": anc.L, "R": anc.R, "N_xi": anc.N,
                     "lambda_max_A2": op.lambda_max, "norm_A1": n1, "norm_A2": n2,
                     "extended_norm_drift": abs(state.norm() - np.linalg.norm(anc.profile) * u0.norm_l2()),
                     "clamped": inv.n_clamped}}


def _coefficients(cfg, prob, grid, params):
    if cfg.parabolic.coefficients == "quadratic":
        return parabolic.coefficients_quadratic(prob, grid)
    h = None if prob.kinetic.kind in ("quadratic", "half_quadratic", "anisotropic") else params.h
    return parabolic.coefficients_general(prob, grid, cfg.parabolic.mode, h)


def run_estimators(cfg: RunConfig, prob, grid, result: dict, prov: dict) -> list:
    est = cfg.estimators
    u = result["u"]
    nu = prob.nu
    plan = obs.ShotPlan(cfg.shots.shots, cfg.seed, cfg.shots.delta) if cfg.shots else None
    norm = None
    if "recovery" in result:
        norm = obs.NormChannel.from_recovery(result["recovery"], result["u0_norm"])
    reports = []
    for i, p in enumerate(est.points):
        sub = None if plan is None else obs.ShotPlan(plan.shots, plan.seed + 1000 * i, plan.delta)
        reports.append(obs.value_at_point(u, p, nu, provenance=prov))
        if sub:
            reports.append(obs.value_at_point(u, p, nu, sub, norm, provenance=prov))
        for k in est.gradient_axes:
            reports.append(obs.gradient_at_point(u, p, k, nu, est.kappa, provenance=prov))
            if sub:
                reports.append(obs.gradient_at_point(u, p, k, nu, est.kappa,
                                                     obs.ShotPlan(sub.shots, sub.seed + 17 + k, sub.delta), prov))
    if est.min_value:
        nsq = float(np.sum(np.abs(u.values) ** 2))
        smin = float(np.min(result["S"].values))
        reports.append(obs.min_value(nsq, nu, grid.n_x, grid.d, S_min=smin, provenance=prov))
        if plan and norm:
            reports.append(obs.min_value(nsq, nu, grid.n_x, grid.d, plan, norm, smin, prov))
    if est.f_terms:
        f = polynomial(est.f_terms)
        reports.append(obs.f_at_argmin(u, f, nu, provenance=prov))
        if plan:
            reports.append(obs.f_at_argmin(u, f, nu, plan, prov))
    return reports


def run_oracles(cfg: RunConfig, prob, grid, result: dict, cache_dir) -> dict:
    T = cfg.scheme.T
    S = result["S"].values
    out = {}
    if "hopf_lax" in cfg.oracles:
        if not prob.potential.is_zero(grid):
            raise ConfigError("hopf_lax oracle needs a zero potential")
        hl = oracles.hopf_lax(prob.initial, prob.kinetic, T, grid, cache_dir=cache_dir)
        out["hopf_lax"] = {"sup_error": float(np.max(np.abs(S - hl.field.values))), "self_error": hl.self_error}
    if "viscous_hj" in cfg.oracles:
        mode = "quadratic" if cfg.pipeline != "entropy_march" else "general"
        vh = oracles.viscous_hj_direct(prob, grid, T, mode, cache_dir=cache_dir)
        out["viscous_hj"] = {"sup_error": float(np.max(np.abs(S - vh.field.values))), "self_error": vh.self_error,
                             "mode": mode}
    if "burgers" in cfg.oracles:
        if grid.d != 1:
            raise ConfigError("burgers oracle is one-dimensional")
        tc = colehopf.TransformConfig(prob.nu)
        R0 = Field(grid, _spectral_derivative(prob.S0(grid).values))
        b = oracles.burgers_direct(R0, prob.potential, prob.nu, T)
        g = colehopf.gradient_from_u(result["u"], 0, tc).values
        out["burgers"] = {"l2_error": float(np.linalg.norm(b.field.values[::2] - g[::2])),
                          "self_error": b.self_error}
    return out


def _spectral_derivative(v: np.ndarray) -> np.ndarray:
    n = v.size
    k = np.fft.fftfreq(n, d=1.0 / n)
    k[n // 2] = 0.0
    return np.fft.ifft(2j * np.pi * k * np.fft.fft(v)).real


# output helpers -----------------------------------------------------------------------------------

def _file_hashes(out: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out.iterdir()) if p.is_file() and p.name != "manifest.json"}


def _write_manifest(out: Path, cfg_resolved: dict, seed: int, command: str, extra: dict) -> None:
    manifest = {"version": __version__, "command": command, "seed": seed, "config": cfg_resolved,
                "config_hash": fieldio.content_hash(cfg_resolved), "files": _file_hashes(out)}
    manifest.update(extra)
    fieldio.write_json(manifest, out / "manifest.json")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output or "viscohj_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


# subcommands ----------------------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _load(args)
    r, prob, grid, params = build(cfg)
    out = _out_dir(args, cfg)
    prov = {"config_hash": fieldio.content_hash(r), "seed": cfg.seed}
    result = run_pipeline(cfg, prob, grid, params)
    fieldio.field_to_csv(result["S"], out / "S.csv")
    fieldio.field_to_csv(result["u"], out / "u.csv")
    fieldio.write_field(result["S"], out / "S.bin")
    if "trajectory" in result:
        rows = []
        for c in result["trajectory"].checkpoints:
            rows.append((c.step, float(c.time), float(c.u.norm_l2()), float(c.log_scale),
                         float(np.min(c.S_nu.values)), float(np.max(c.S_nu.values))))
            fieldio.field_to_csv(c.S_nu, out / f"S_step{c.step:06d}.csv")
        fieldio.write_table(out / "trajectory.csv", ["step", "time", "norm_u", "log_scale", "S_min", "S_max"], rows)
    if "state" in result:
        st = result["state"]
        fieldio.write_table(out / "block_norms.csv", ["eta", "block_norm"],
                            [(float(e), float(n)) for e, n in zip(st.anc.eta, st.block_norms())])
    reports = run_estimators(cfg, prob, grid, result, prov)
    fieldio.write_json([rep.to_dict() for rep in reports], out / "estimates.json")
    comps = run_oracles(cfg, prob, grid, result, out / "cache") if cfg.oracles else {}
    fieldio.write_json(comps, out / "oracle_comparison.json")
    _write_manifest(out, r, cfg.seed, "run", {"pipeline": result["meta"]})
    return EXIT_OK


def _ladder(args):
    if not args.ladder:
        raise ConfigError("--ladder is required")
    try:
        vals = [float(v) for v in args.ladder.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad ladder value: {exc}") from None
    if len(vals) < 3:
        raise ConfigError("a sweep needs at least 3 ladder points")
    if vals != sorted(vals) and vals != sorted(vals, reverse=True):
        raise ConfigError("ladder values must be sorted")
    if min(vals) <= 0:
        raise ConfigError("ladder values must be positive")
    return sorted(vals)


def sweep_errors(cfg: RunConfig, axis: str, ladder) -> list:
    """(axis value, error) pairs against the oracle designated for the axis."""
    r, prob, grid, params = build(cfg)
    T = cfg.scheme.T
    rows = []
    if axis == "h":
        # entropy march vs the calibrated continuum solution
        for h in ladder:
            p = SchemeParams(h, T)
            S = entropy.march(prob, p, grid, []).final.S_nu
            hh = None if prob.kinetic.kind in ("quadratic", "half_quadratic", "anisotropic") else h
            ref = parabolic.solve_S(prob, grid, T, parabolic.IntegratorConfig(cfg.parabolic.method,
                                                                              symbol=cfg.parabolic.symbol),
                                    pipeline="general", mode=cfg.parabolic.mode, h=hh)
            rows.append((h, float(np.max(np.abs(S.values - ref.values)))))
    elif axis == "nu":
        hl = oracles.hopf_lax(prob.initial, prob.kinetic, T, grid)
        for nu in ladder:
            pr = type(prob)(prob.kinetic, prob.potential, prob.initial, nu)
            S = parabolic.solve_S(pr, grid, T, parabolic.IntegratorConfig(cfg.parabolic.method,
                                                                          symbol=cfg.parabolic.symbol))
            rows.append((nu, float(np.max(np.abs(S.values - hl.field.values)))))
    elif axis == "dx":
        for dx in ladder:
            n = int(round(1.0 / dx))
            n += n % 2
            g = make_grid(cfg.grid.d, n)
            coeffs = _coefficients(cfg, prob, g, params)
            tc = colehopf.TransformConfig(prob.nu)
            u0 = colehopf.forward(prob.S0(g), tc)
            u = parabolic.evolve(u0, coeffs, T, parabolic.IntegratorConfig("explicit_rk4"))
            ref = oracles.heat_exact(u0, coeffs, T).field
            err = np.max(np.abs(colehopf.inverse(u, tc).values - colehopf.inverse(ref, tc).values))
            rows.append((1.0 / n, float(err)))
    elif axis in ("kappa", "shots"):
        result = run_pipeline(cfg, prob, grid, params)
        u = result["u"]
        pts = cfg.estimators.points or [[grid.n_x // 4] * grid.d]
        p0 = pts[0]
        if axis == "kappa":
            k = (cfg.estimators.gradient_axes or [0])[0]
            ref = abs(obs.log_gradient(u, p0, k, prob.nu))
            for kap in ladder:
                rows.append((kap, abs(obs.gradient_at_point(u, p0, k, prob.nu, kap).estimate - ref)))
        else:
            if cfg.estimators.gradient_axes:
                k = cfg.estimators.gradient_axes[0]
                fn = lambda plan: obs.gradient_at_point(u, p0, k, prob.nu, cfg.estimators.kappa, plan)
            else:
                fn = lambda plan: obs.value_at_point(u, p0, prob.nu, plan)
            curve = obs.shot_cost_curve(fn, [int(s) for s in ladder], repeats=100, seed=cfg.seed)
            rows = [(float(s), float(e)) for s, e in zip(curve.shots, curve.rms_error)]
    else:
        raise ConfigError(f"unknown axis {axis!r}")
    return rows


def cmd_sweep(args) -> int:
    cfg = _load(args)
    axis = ALIASES.get(args.axis, args.axis)
    if axis not in AXES:
        raise ConfigError(f"--axis must be one of {', '.join(AXES)}")
    ladder = _ladder(args)
    r, *_ = build(cfg)
    out = _out_dir(args, cfg)
    rows = sweep_errors(cfg, axis, ladder)
    # one subdirectory per ladder point, then a single reducer pass builds the table
    for i, (a, e) in enumerate(rows):
        pdir = out / "points" / f"{i:03d}"
        pdir.mkdir(parents=True, exist_ok=True)
        fieldio.write_json({"axis": axis, "value": float(a), "error": float(e)}, pdir / "point.json")
    merged = [json.loads((out / "points" / f"{i:03d}" / "point.json").read_text()) for i in range(len(rows))]
    lo, hi = PREDICTED[axis]
    slope = obs.loglog_slope([m["value"] for m in merged], [m["error"] for m in merged])
    fieldio.write_table(out / "sweep.csv", [axis, "error", "predicted_exponent_low", "predicted_exponent_high"],
                        [(m["value"], m["error"], lo, hi) for m in merged])
    summary = {"axis": axis, "ladder": ladder, "slope": slope, "predicted_exponent": [lo, hi],
               "oracle": SWEEP_ORACLE[axis]}
    fieldio.write_json(summary, out / "summary.json")
    _write_manifest(out, r, cfg.seed, "sweep", {"axis": axis, "ladder": ladder})
    print(f"{axis}: slope {slope:.4f} (predicted {lo:g}..{hi:g})")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load(args)
    r, prob, grid, params = build(cfg)
    out = _out_dir(args, cfg)
    T = cfg.scheme.T
    names = cfg.oracles or ["viscous_hj"]
    info = {}
    for name in names:
        if name == "hopf_lax":
            res = oracles.hopf_lax(prob.initial, prob.kinetic, T, grid, cache_dir=out / "cache")
        elif name == "viscous_hj":
            res = oracles.viscous_hj_direct(prob, grid, T, cache_dir=out / "cache")
        else:
            if grid.d != 1:
                raise ConfigError("burgers oracle is one-dimensional")
            R0 = Field(grid, _spectral_derivative(prob.S0(grid).values))
            res = oracles.burgers_direct(R0, prob.potential, prob.nu, T)
        fieldio.field_to_csv(res.field, out / f"oracle_{name}.csv")
        info[name] = {"method": res.method, "resolution": res.resolution, "self_error": res.self_error}
    fieldio.write_json(info, out / "oracles.json")
    _write_manifest(out, r, cfg.seed, "oracle", {})
    return EXIT_OK


def cmd_report(args) -> int:
    root = Path(args.out or ".")
    man_path = root / "manifest.json"
    if not man_path.exists():
        raise ConfigError(f"no manifest in {root}")
    man = json.loads(man_path.read_text())
    lines = [f"command: {man['command']}", f"version: {man['version']}", f"seed: {man['seed']}",
             f"config_hash: {man['config_hash']}"]
    for name, digest in sorted(man["files"].items()):
        p = root / name
        ok = p.exists() and hashlib.sha256(p.read_bytes()).hexdigest() == digest
        lines.append(f"file {name}: {'ok' if ok else 'MODIFIED'}")
    if (root / "estimates.json").exists():
        for rep in json.loads((root / "estimates.json").read_text()):
            mode = f"shots={rep['shots']}" if rep["shots"] else "exact"
            lines.append(f"{rep['name']} [{mode}]: {rep['estimate']:.10g} (exact {rep['exact']:.10g}, "
                         f"se {rep['std_error']:.3g})")
    if (root / "oracle_comparison.json").exists():
        for name, v in sorted(json.loads((root / "oracle_comparison.json").read_text()).items()):
            lines.append(f"oracle {name}: " + ", ".join(f"{k}={v[k]}" for k in sorted(v)))
    if (root / "summary.json").exists():
        s = json.loads((root / "summary.json").read_text())
        lines.append(f"sweep {s['axis']}: slope {s['slope']:.4f}, predicted {s['predicted_exponent']}")
    text = "\n".join(lines) + "\n"
    (root / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="viscohj", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "oracle"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        if name == "sweep":
            p.add_argument("--axis", required=True, help="one of h, nu, dx, kappa, shots")
            p.add_argument("--ladder", required=True, help="comma-separated axis values")
    p = sub.add_parser("report")
    p.add_argument("--out", default=".", help="artifact directory to summarise")
    return ap


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "report": cmd_report}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, ConfigError, GridError, ProblemError, parabolic.CFLError, FileNotFoundError) as exc:
        sys.stderr.write(f"invalid configuration: {exc}\n")
        return EXIT_INVALID
    except (ArithmeticError, schrod.SchrodError, oracles.OracleError) as exc:
        sys.stderr.write(f"numerical abort: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
