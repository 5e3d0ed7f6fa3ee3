"""Command-line runner: ``spectrolab <subcommand> --config run.yaml --out DIR``.

Exit codes: 0 success, 1 a hard check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import control as ctl
from . import extension as ext
from . import specineq as si
from .config import SUBCOMMANDS, ConfigError, ExperimentConfig, config_hash, load_yaml, validate
from .grid import ConstantCoefficients, build_torus, cell_cover, coefficient_spec_from_dict, sample_coefficients
from .operator import assemble, eigendecompose, periodic_stencil_eigenvalues
from .report import Plot, RunOutputs, RunRecord, emit_report
from .sets import generate_set, hausdorff_content, set_spec_from_dict, verify_density


def _setup(cfg: ExperimentConfig):
    d = cfg.domain
    grid = build_torus(d["dim"], d["L"], d["N"])
    try:
        spec = coefficient_spec_from_dict(cfg.coefficients)
    except TypeError as exc:
        raise ConfigError("coefficients", str(exc)) from exc
    coeffs = sample_coefficients(spec, grid)
    op = assemble(grid, coeffs)
    return grid, spec, op


def _observation_set(cfg: ExperimentConfig, grid):
    block = dict(cfg.set)
    if block.get("kind") == "random-density" and "seed" not in block:
        block["seed"] = cfg.seed
    # "fraction" gives delta as a fraction of |B(R)|
    if "fraction" in block:
        block["delta"] = float(block.pop("fraction")) * grid.ball_measure(float(block["R"]))
    try:
        return generate_set(set_spec_from_dict(block), grid)
    except (KeyError, TypeError) as exc:
        raise ConfigError("set", f"bad set block: {exc}") from exc


def _cells(grid, p: dict):
    c = p.get("cells", {})
    return cell_cover(grid, float(c.get("R", 1.0)), float(c.get("T1", 0.5)), float(c.get("T2", 1.0)),
                      c.get("pitch"))


# ------------------------------------------------------------------ pipelines


def run_spectrum(cfg, out: RunOutputs) -> None:
    grid, spec, op = _setup(cfg)
    dec = eigendecompose(op)
    out.table("eigenvalues", ["k", "lambda_squared", "lambda"],
              [(k, l2, l) for k, (l2, l) in enumerate(zip(dec.eigenvalues, dec.frequencies))])
    out.plots.append(Plot("eigenvalues", list(range(dec.size)), list(dec.eigenvalues), "k", "lambda^2"))
    rng = np.random.default_rng(cfg.seed)
    u, v = rng.standard_normal((2, grid.size))
    resid = abs(op.inner(op.apply(u), v) - op.inner(u, op.apply(v))) / max(op.norm(op.apply(u)) * op.norm(v), 1e-300)
    out.check("self-adjoint", resid <= 1e-12, f"residual {resid:.3e}")
    metric = spec.metric if isinstance(spec, ConstantCoefficients) else None
    if grid.dim == 1 and isinstance(spec, ConstantCoefficients) and (metric is None or np.ndim(metric) == 0):
        g = 1.0 if metric is None else float(metric)
        ref = g * periodic_stencil_eigenvalues(grid.resolution, grid.extent)
        rel = np.abs(dec.eigenvalues - ref) / np.maximum(ref, 1.0)
        out.table("closed_form", ["k", "computed", "closed_form", "rel_error"],
                  zip(range(dec.size), dec.eigenvalues, ref, rel))
        out.check("closed-form eigenvalues", rel.max() <= 1e-10, f"max rel error {rel.max():.3e}")


def run_specineq(cfg, out: RunOutputs) -> None:
    grid, _, op = _setup(cfg)
    dec = eigendecompose(op)
    obs = _observation_set(cfg, grid)
    p = cfg.params
    variant = p.get("variant", "L2")
    samples = []
    if variant == "L2":
        samples = [si.spectral_constant_L2(dec, obs, mu) for mu in p["mus"]]
    else:
        cells = _cells(grid, p)
        warm = []
        for mu in p["mus"]:
            s = si.spectral_constant_Linf(dec, obs, mu, cells, restarts=int(p.get("restarts", 8)),
                                          rng=cfg.seed, warm_start=warm)
            warm = [s.witness]
            samples.append(s)
    r2 = si.running_r2(samples)
    out.table("constants", ["mu", "variant", "constant", "r2_running"],
              [(s.mu, s.variant, s.constant, r) for s, r in zip(samples, r2)])
    out.plots.append(Plot("constants", [s.mu for s in samples], [s.constant for s in samples],
                          "mu", "C(mu)", logy=True))
    vals = [s.constant for s in samples]
    if variant == "L2":
        out.check("monotone in mu", all(b >= a for a, b in zip(vals, vals[1:])))
    try:
        fit = si.fit_exponential(samples)
    except ValueError as exc:
        out.check("exponential fit", False, str(exc))
        return
    out.table("fit", ["log_c0", "slope", "r2", "heldout_gap", "excluded"],
              [(fit.log_c0, fit.slope, fit.r2, fit.heldout_gap, fit.excluded)])
    r2_min, gap_max = float(p.get("r2_min", 0.95)), float(p.get("gap_max", 0.15))
    out.check("fit R^2", fit.r2 >= r2_min, f"{fit.r2:.5f} >= {r2_min}")
    out.check("held-out gap", abs(fit.heldout_gap) <= gap_max, f"{fit.heldout_gap:+.4f}")


def run_propagation(cfg, out: RunOutputs) -> None:
    grid, _, op = _setup(cfg)
    dec = eigendecompose(op)
    obs = _observation_set(cfg, grid)
    p = cfg.params
    cells = _cells(grid, p)
    rng = np.random.default_rng(cfg.seed)
    lo, hi = p.get("mu_range", [5, 15])
    count = int(p.get("samples", 200))
    steps = int(p.get("time_steps", 8))
    T2 = float(p.get("cells", {}).get("T2", 1.0))
    samples = []
    for _ in range(count):
        mu = float(rng.uniform(lo, hi))
        u = rng.standard_normal(grid.size)
        fld = ext.extend(dec, u, mu, T2, steps)
        cell = cells[int(rng.integers(len(cells)))]
        samples.append(ext.region_sups(fld, cell, obs))
    out.table("region_sups", ["cell", "mu", "supE", "supK", "supOmega", "emptyE"],
              [(s.cell.index, s.mu, s.supE, s.supK, s.supOmega, s.emptyE) for s in samples])
    fit = ext.estimate_alpha(samples)
    out.table("alpha_fit", ["alpha", "constant", "r2", "used", "excluded", "heldout_fraction"],
              [(fit.alpha, fit.constant, fit.r2, fit.used, fit.excluded, fit.heldout_fraction)])
    good = [s for s in samples if s.supE > 0]
    out.plots.append(Plot("alpha", [math.log(s.supE / s.supOmega) for s in good],
                          [math.log(s.supK / s.supOmega) for s in good],
                          "log supE/supOmega", "log supK/supOmega", scatter=True))
    out.check("alpha in range", 0.02 < fit.alpha < 0.98, f"alpha {fit.alpha:.4f}")
    frac = float(p.get("heldout_min", 0.95))
    out.check("held-out fraction", fit.heldout_fraction >= frac, f"{fit.heldout_fraction:.3f}")


def run_sobolev(cfg, out: RunOutputs) -> None:
    grid, _, op = _setup(cfg)
    dec = eigendecompose(op)
    p = cfg.params
    cells = _cells(grid, p)
    T2 = float(p.get("cells", {}).get("T2", 1.0))
    fit = ext.sobolev_bound_check(dec, p["mus"], int(p.get("trials", 5)), T2, cells, rng=cfg.seed,
                                  time_steps=int(p.get("time_steps", 16)))
    out.table("sobolev", ["mu", "lhs"], zip(fit.mus, fit.lhs))
    out.table("sobolev_fit", ["slope", "log_constant", "r2", "heldout_ratio"],
              [(fit.slope, fit.log_constant, fit.r2, fit.heldout_ratio)])
    out.plots.append(Plot("sobolev", list(fit.mus), list(fit.lhs), "mu", "LHS^(1/2)", logy=True))
    r2_min = float(p.get("r2_min", 0.9))
    out.check("fit R^2", fit.r2 >= r2_min, f"{fit.r2:.4f}")
    out.check("held-out mu", fit.heldout_ok, f"ratio {fit.heldout_ratio:.3f}")


def _initial_states(cfg, grid):
    rng = np.random.default_rng(cfg.seed)
    u0 = rng.standard_normal(grid.size)
    v0 = rng.standard_normal(grid.size) if cfg.params.get("target", "zero") == "random" else np.zeros(grid.size)
    return u0, v0


def _field_rows(result):
    return [(t, int(i), f[i]) for t, f in zip(result.times, result.control) for i in np.flatnonzero(f)]


def run_control_hum(cfg, out: RunOutputs) -> None:
    grid, _, op = _setup(cfg)
    dec = eigendecompose(op)
    obs = _observation_set(cfg, grid)
    p = cfg.params
    T = float(p["T"])
    F = ctl.TimeSet(tuple(tuple(iv) for iv in p["F"]), int(p.get("nodes_per_interval", 32)))
    u0, v0 = _initial_states(cfg, grid)
    tol = float(p.get("tol", 1e-6))
    res = ctl.hum_control(dec, obs, F, u0, v0, T, eps=p.get("eps"), mu=p.get("mu"),
                          quadrature=p.get("quadrature", "trapezoid"), tol=tol)
    G = ctl.observability_gramian(dec, obs, F.reflect(T), modes=res.modes, quadrature="exact")
    cobs = ctl.observability_constant(dec, G, T)
    defect = dec.coefficients(v0 - u0)[res.modes]
    bound = cobs * float(defect @ defect)
    out.table("control_summary",
              ["modes", "cost", "terminal_residual", "dissipated_residual", "regularization", "c_obs", "cost_bound"],
              [(res.modes.size, res.cost, res.terminal_residual, res.dissipated_residual, res.regularization,
                cobs, bound)])
    out.table("control_field", ["t", "node", "value"], _field_rows(res))
    out.check("terminal residual", res.success, f"{res.terminal_residual:.3e} <= {tol}")
    out.check("cost within observability bound", res.cost <= bound, f"{res.cost:.4g} <= {bound:.4g}")


def run_control_lr(cfg, out: RunOutputs) -> None:
    grid, _, op = _setup(cfg)
    dec = eigendecompose(op)
    obs = _observation_set(cfg, grid)
    p = cfg.params
    T = float(p["T"])
    sched = ctl.geometric_slabs(T, int(p.get("slabs", 2)), float(p.get("mu0", 2.0)),
                                float(p.get("ratio", 0.5)), float(p.get("growth", 2.0)))
    u0, _ = _initial_states(cfg, grid)
    u0 = u0 / dec.norm(u0)
    tol = float(p.get("tol", 1e-6))
    res = ctl.lebeau_robbiano_control(dec, obs, u0, T, sched, tol=tol, slope=p.get("slope"))
    rows = res.diagnostics["slabs"]
    keys = ["slab", "start", "end", "window", "mu", "modes", "state_norm", "cost", "block_residual", "end_norm"]
    out.table("slabs", keys, [[r[k] for k in keys] for r in rows])
    out.table("control_field", ["t", "node", "value"], _field_rows(res))
    out.plots.append(Plot("cost", [r["mu"] for r in rows], [r["cost"] for r in rows], "mu_j", "slab cost", logy=True))
    out.check("final state norm", res.success, f"{res.terminal_residual:.3e} <= {tol}"
              + (" (schedule exhausted the spectrum)" if res.diagnostics["partial"] else ""))


def run_control_impulsive(cfg, out: RunOutputs) -> None:
    grid, _, op = _setup(cfg)
    dec = eigendecompose(op)
    obs = _observation_set(cfg, grid)
    p = cfg.params
    T = float(p["T"])
    try:
        sched = ctl.geometric_schedule(T, float(p["tau"]), int(p.get("J", 6)), float(p.get("D", 1.0)), p.get("t0"))
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from exc
    u0, v0 = _initial_states(cfg, grid)
    tol = float(p.get("tol", 1e-6))
    res = ctl.impulsive_control(dec, obs, sched, u0, v0, T, eps=p.get("eps"), mu=p.get("mu"), tol=tol)
    norms = res.diagnostics["impulse_norms"]
    out.table("impulses", ["j", "t", "weight", "norm"],
              [(j, t, w, n) for j, (t, w, n) in enumerate(zip(res.times, res.weights, norms))])
    out.table("control_summary", ["modes", "cost", "weighted_cost", "terminal_residual", "dissipated_residual",
                                  "regularization"],
              [(res.modes.size, res.cost, res.weighted_cost, res.terminal_residual, res.dissipated_residual,
                res.regularization)])
    out.table("control_field", ["t", "node", "value"], _field_rows(res))
    out.check("terminal residual", res.success, f"{res.terminal_residual:.3e} <= {tol}")


def run_obster(cfg, out: RunOutputs) -> None:
    grid, _, op = _setup(cfg)
    dec = eigendecompose(op)
    obs = _observation_set(cfg, grid)
    p = cfg.params
    T, tau = float(p["T"]), float(p["tau"])
    s0 = float(p.get("s0", T / 2))
    s = s0 * tau ** np.arange(int(p.get("count", 7)))
    rep = ctl.verify_obster(dec, obs, s, float(p.get("D", 1.0)), int(p.get("trials", 50)), T, tau=tau, rng=cfg.seed)
    out.table("obster", ["trial", "lhs", "rhs", "constant"],
              [(i, a, b, c) for i, (a, b, c) in enumerate(zip(rep.lhs, rep.rhs, rep.constants))])
    out.table("obster_summary", ["constant", "spread", "skipped"], [(rep.constant, rep.spread, rep.skipped)])
    limit = float(p.get("max_spread", 10.0))
    out.check("constant stable across trials", rep.spread <= limit, f"max/min {rep.spread:.3f} <= {limit}")


def run_sets(cfg, out: RunOutputs) -> None:
    grid = build_torus(cfg.domain["dim"], cfg.domain["L"], cfg.domain["N"])
    obs = _observation_set(cfg, grid)
    out.table("set_nodes", ["node"], [(int(i),) for i in obs.nodes])
    out.table("set_summary", ["kind", "nodes", "measure", "R", "delta", "content_dim"],
              [(obs.construction["generator"], obs.nodes.size, obs.measure, obs.R, obs.delta,
                "" if obs.content_dim is None else obs.content_dim)])
    p = cfg.params
    if "density" in p:
        R, delta = float(p["density"]["R"]), float(p["density"]["delta"])
        rep = verify_density(obs, R, delta)
        out.table("density", ["R", "delta", "min_measure", "worst_center", "passed"],
                  [(rep.R, rep.delta, rep.min_measure, rep.worst_center, rep.passed)])
        out.check("density", rep.passed, f"min {rep.min_measure:.4g} >= {delta}")
    if "content" in p:
        n = p["content"].get("n", obs.content_dim)
        if n is None:
            raise ConfigError("params.content.n", "missing (set has no natural content order)")
        est = hausdorff_content(obs, float(n), float(p["content"]["max_radius"]))
        out.table("content", ["n", "upper", "lower", "ratio"], [(est.n, est.upper, est.lower, est.upper / est.lower)])
        limit = float(p["content"].get("max_ratio", 4.0))
        out.check("content bounds", est.lower <= est.upper <= limit * est.lower,
                  f"upper/lower {est.upper / est.lower:.3f}")


PIPELINES = {
    "spectrum": run_spectrum, "specineq": run_specineq, "propagation": run_propagation,
    "sobolev": run_sobolev, "control-hum": run_control_hum, "control-lr": run_control_lr,
    "control-impulsive": run_control_impulsive, "obster": run_obster, "sets": run_sets,
}


def run_experiment(cfg: ExperimentConfig, out_dir) -> RunRecord:
    outputs = RunOutputs()
    try:
        PIPELINES[cfg.experiment](cfg, outputs)
    except ConfigError:
        raise
    except ValueError as exc:
        # invalid numeric setups surfaced by the modules count as config errors
        raise ConfigError(cfg.experiment, str(exc)) from exc
    return emit_report(outputs, out_dir, cfg.experiment, config_hash(cfg.raw), cfg.raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectrolab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--strict", action="store_true", help="fail instead of warn on under-resolution")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = validate(load_yaml(args.config), args.command, seed=args.seed, strict=args.strict)
        out_dir = args.out or Path(cfg.output or f"runs/{cfg.experiment}")
        record = run_experiment(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        # an unwritable output directory is a setup error, not a failed assertion
        print(f"output error: {exc}", file=sys.stderr)
        return 2
    for c in record.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    print(f"wrote {len(record.files)} files to {out_dir}")
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
