"""Batch CLI: scales, simulate, peq, evolve, moments, compare, ndcoeffs.

Every run writes its delimited outputs (CSV/JSON) plus rendered PNG figures
into --out, and a manifest.json echoing the full configuration, derived
scales, seed, code version and a sha256 per output file.  Exit codes:
0 pass, 1 usage error, 2 numerical failure, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, dt_guard, model_from_config, parse_config,
                     sim_config_from)
from .grid import GridPdf, UniformGrid, l1_distance, symmetric_grid
from .master import (default_grid, equilibrium_pdf_fick,
                     equilibrium_pdf_third, flux_coefficients, pdf_moment)
from .model import ModelParams, derived_scales
from .moments import DIVERGENT, equilibrium_moment, moment_table
from .ndim import ConvergenceError, NdModel, nd_coefficients
from .pde import EvolveConfig, build_generator, evolve, steady_state
from .sde import (DivergenceError, EnsembleStats, SimConfig, ensemble_stats,
                  integrate_trajectory)
from .special import AccuracyError

USAGE_ERROR, NUMERICAL_ERROR, ACCEPTANCE_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit_(USAGE_ERROR, f"usage error: {message}")


class SystemExit_(Exception):
    def __init__(self, code, message=""):
        super().__init__(message)
        self.code = code


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class Manifest:
    """Collects run metadata and output hashes; one JSON per run."""

    def __init__(self, command, args, params=None, scales=None, seed=None):
        self.data = {
            "command": command,
            "argv": list(args),
            "version": __version__,
            "started_unix": time.time(),
            "params": params.as_dict() if params else None,
            "derived_scales": _jsonable(scales.as_dict()) if scales else None,
            "seed": seed,
            "outputs": [],
        }

    def add(self, path: Path):
        self.data["outputs"].append(
            {"path": path.name, "sha256": _sha256(path)})

    def write(self, outdir: Path):
        self.data["finished_unix"] = time.time()
        path = outdir / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2) + "\n")
        return path


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and math.isinf(v):
            out[k] = "inf"
        else:
            out[k] = v
    return out


def _csv_header(params: ModelParams, scales, cfg_extra=None) -> dict:
    hdr = {"version": __version__}
    hdr.update({k: repr(v) for k, v in params.as_dict().items()})
    hdr.update({k: repr(v) for k, v in _jsonable(scales.as_dict()).items()})
    if cfg_extra:
        hdr.update(cfg_extra)
    return hdr


def _write_csv(path: Path, header: dict, columns: dict):
    with open(path, "w") as fh:
        for k, v in header.items():
            fh.write(f"# {k}={v}\n")
        keys = list(columns)
        fh.write(",".join(keys) + "\n")
        rows = zip(*(columns[k] for k in keys))
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if v is DIVERGENT:
        return "inf"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def l1_hist_vs_pdf(stats: EnsembleStats, pdf: GridPdf) -> float:
    """L1 distance of the MC histogram density to a grid PDF."""
    widths = np.diff(stats.hist_edges)
    curve = pdf.interp(stats.bin_centers)
    return float(np.sum(np.abs(stats.density - curve) * widths))


# ---------------------------------------------------------------- scales

def cmd_scales(ns, ctx) -> int:
    params, kernel, scales = ctx["params"], ctx["kernel"], ctx["scales"]
    rows = {**params.as_dict(), **_jsonable(scales.as_dict())}
    if ns.json:
        print(json.dumps(rows, indent=2))
    else:
        for k, v in rows.items():
            print(f"{k:>16} : {v}")
    outdir, manifest = ctx["outdir"], ctx["manifest"]
    path = outdir / "scales.json"
    path.write_text(json.dumps(rows, indent=2) + "\n")
    manifest.add(path)

    if ns.sweep:
        key, _, spec = ns.sweep.partition("=")
        if key.strip() != "gamma_tau":
            raise SystemExit_(USAGE_ERROR, "only gamma_tau sweeps supported")
        try:
            a, b, n = spec.split(":")
            a, b, n = float(a), float(b), int(n)
        except ValueError:
            raise SystemExit_(USAGE_ERROR, f"bad sweep spec {ns.sweep!r}")
        gts = np.geomspace(a, b, n) if a > 0 else np.linspace(a, b, n)
        deltas = [float(d) for d in ns.deltas.split(",")]
        curves = {}
        for d in deltas:
            rs = []
            for gt in gts:
                p = ModelParams(gamma=gt / params.tau, epsilon=d / params.tau,
                                tau=params.tau, d_f=params.d_f)
                rs.append(derived_scales(p, kernel).big_r)
            curves[d] = np.asarray(rs)
        cols = {"gamma_tau": gts}
        cols.update({f"R_delta_{d:g}": curves[d] for d in deltas})
        path = outdir / "sweep.csv"
        _write_csv(path, _csv_header(params, scales), cols)
        manifest.add(path)
        from .figures import render_sweep
        fig = outdir / "sweep.png"
        render_sweep(gts, curves, fig)
        manifest.add(fig)
    return 0


# -------------------------------------------------------------- simulate

def cmd_simulate(ns, ctx) -> int:
    params, scales, cfg = ctx["params"], ctx["scales"], ctx["cfg"]
    outdir, manifest = ctx["outdir"], ctx["manifest"]
    sim = sim_config_from(cfg, params, seed=ctx["seed"])
    stats = ensemble_stats(params, sim, threads=ns.threads)
    hdr = _csv_header(params, scales, {"seed": sim.seed, "dt": repr(sim.dt),
                                       "n_traj": sim.n_traj,
                                       "stride": sim.stride})
    path = outdir / "histogram.csv"
    stats.histogram_csv(path, header=hdr)
    manifest.add(path)
    path = outdir / "stats.json"
    path.write_text(json.dumps(stats.to_dict(), indent=2) + "\n")
    manifest.add(path)

    from .figures import render_histogram
    fig = outdir / "histogram.png"
    render_histogram(stats, fig)
    manifest.add(fig)

    if ns.trajectory is not None:
        times, xs = integrate_trajectory(params, sim, stream=ns.trajectory)
        path = outdir / "trajectory.csv"
        _write_csv(path, hdr, {"t": times, "x": xs})
        manifest.add(path)
        from .figures import render_trajectory
        fig = outdir / "trajectory.png"
        render_trajectory(times, xs, fig)
        manifest.add(fig)
    if ns.json:
        print(json.dumps(stats.to_dict(), indent=2))
    else:
        for n, (m, se) in stats.moments.items():
            print(f"<x^{n}> = {m:.6g} +- {se:.2g}")
    return 0


# ------------------------------------------------------------------- peq

def _comparison_grid(cfg, params, scales) -> UniformGrid:
    n_cells = int(cfg.get("n_cells", 2048))
    if "x_max" in cfg:
        return symmetric_grid(float(cfg["x_max"]), n_cells)
    return default_grid(params, scales, n_cells)


def cmd_peq(ns, ctx) -> int:
    params, scales, cfg = ctx["params"], ctx["scales"], ctx["cfg"]
    outdir, manifest = ctx["outdir"], ctx["manifest"]
    grid = _comparison_grid(cfg, params, scales)
    third = equilibrium_pdf_third(scales, params, grid)
    fick = equilibrium_pdf_fick(scales, params, grid)
    hdr = _csv_header(params, scales)
    for name, pdf in (("peq_third", third), ("peq_fick", fick)):
        path = outdir / f"{name}.csv"
        pdf.to_csv(path, header={**hdr, "kind": name})
        manifest.add(path)
    from .figures import render_pdfs
    fig = outdir / "peq.png"
    render_pdfs([third, fick], ["third-order", "Fick (FPE)"], fig)
    manifest.add(fig)
    report = {
        "m2_third": pdf_moment(third, 2, scales),
        "m2_fick": pdf_moment(fick, 2, scales),
        "tail_exponent": scales.alpha_tail,
    }
    print(json.dumps(_jsonable(report), indent=2))
    return 0


# ---------------------------------------------------------------- evolve

def cmd_evolve(ns, ctx) -> int:
    params, scales, cfg = ctx["params"], ctx["scales"], ctx["cfg"]
    outdir, manifest = ctx["outdir"], ctx["manifest"]
    coeffs = flux_coefficients(scales, params)
    if ns.fpe:
        from .master import FluxCoefficients
        coeffs = FluxCoefficients(coeffs.a1, coeffs.d0, coeffs.d2, 0.0)
    grid = _comparison_grid(cfg, params, scales)
    gen = build_generator(coeffs, grid)
    var0 = params.d_f / params.gamma
    x = grid.centers
    p0 = GridPdf(grid, np.exp(-x**2 / (2 * var0)) /
                 math.sqrt(2 * math.pi * var0))
    t_end = float(cfg.get("pde_t_end", 50.0))
    dt = float(cfg.get("pde_dt", 0.05))
    snaps = ([float(s) for s in ns.snapshots.split(",")] if ns.snapshots
             else list(np.linspace(t_end / 5, t_end, 5)))
    res = evolve(p0, gen, EvolveConfig(dt=dt, t_end=t_end), snapshot_times=snaps)
    hdr = _csv_header(params, scales, {"pde_dt": repr(dt)})
    for t, pdf in zip(res.times, res.snapshots):
        path = outdir / f"snapshot_t{t:g}.csv"
        pdf.to_csv(path, header={**hdr, "t": repr(t)})
        manifest.add(path)
    report = {
        "times": res.times,
        "mass_drift_max": float(np.abs(res.mass - res.mass[0]).max()),
        "min_density": res.min_density,
        "final_residual": res.steady_residual,
        "steps": res.steps,
        "undershoot_warned": res.undershoot_warned,
    }
    path = outdir / "evolve_report.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    manifest.add(path)
    from .figures import render_evolution
    fig = outdir / "evolution.png"
    render_evolution(res.times, res.snapshots, fig)
    manifest.add(fig)
    print(json.dumps(report, indent=2))
    return 0


# --------------------------------------------------------------- moments

def cmd_moments(ns, ctx) -> int:
    params, scales = ctx["params"], ctx["scales"]
    outdir, manifest = ctx["outdir"], ctx["manifest"]
    rows = moment_table(ns.n_max, scales, params)
    cols = {
        "n": [r[0] for r in rows],
        "equilibrium": [r[1] for r in rows],
        "rate": [r[2] for r in rows],
        "exists": [r[3] for r in rows],
    }
    path = outdir / "moments.csv"
    _write_csv(path, _csv_header(params, scales), cols)
    manifest.add(path)
    if ns.json:
        print(json.dumps([{"n": r[0],
                           "equilibrium": ("inf" if r[1] is DIVERGENT
                                           else r[1]),
                           "rate": r[2], "exists": r[3]} for r in rows],
                         indent=2))
    else:
        print(f"{'n':>3} {'equilibrium':>16} {'rate':>12} {'exists':>7}")
        for n, eq, rate, exists in rows:
            eq_s = "∞" if eq is DIVERGENT else f"{eq:.10g}"
            print(f"{n:>3} {eq_s:>16} {rate:>12.6g} {str(exists).lower():>7}")
    return 0


# --------------------------------------------------------------- compare

def cmd_compare(ns, ctx) -> int:
    params, scales, cfg = ctx["params"], ctx["scales"], ctx["cfg"]
    outdir, manifest = ctx["outdir"], ctx["manifest"]
    coeffs = flux_coefficients(scales, params)
    grid = _comparison_grid(cfg, params, scales)

    third = equilibrium_pdf_third(scales, params, grid)
    fick = equilibrium_pdf_fick(scales, params, grid)

    sim = sim_config_from(cfg, params, seed=ctx["seed"])
    stats = ensemble_stats(params, sim, threads=ns.threads)

    steady = None
    if not ns.skip_pde:
        var0 = params.d_f / params.gamma
        x = grid.centers
        p0 = GridPdf(grid, np.exp(-x**2 / (2 * var0)) /
                     math.sqrt(2 * math.pi * var0))
        gen = build_generator(coeffs, grid)
        pde_cfg = EvolveConfig(dt=float(cfg.get("pde_dt", 0.05)),
                               t_end=float(cfg.get("pde_t_end", 400.0)),
                               steady_tol=float(cfg.get("steady_tol", 1e-9)))
        steady, _ = steady_state(gen, pde_cfg, p0)

    l1 = {
        "mc_vs_third": l1_hist_vs_pdf(stats, third),
        "mc_vs_fick": l1_hist_vs_pdf(stats, fick),
    }
    if steady is not None:
        l1["mc_vs_steady"] = l1_hist_vs_pdf(stats, steady)
        l1["steady_vs_third"] = l1_distance(steady, third)

    # moment table: theory vs MC vs quadrature of both equilibria
    mom_rows = []
    for n in range(1, 5):
        eq = equilibrium_moment(n, scales, params)
        mc, se = stats.moments[n]
        mom_rows.append({
            "n": n,
            "theory": eq,
            "mc": mc, "mc_se": se,
            "quad_third": pdf_moment(third, n, scales),
            "quad_fick": pdf_moment(fick, n, scales),
        })

    if scales.delta == 0.0:
        pairs = [l1_distance(third, fick)]
        if steady is not None:
            pairs += [l1_distance(steady, third), l1_distance(steady, fick)]
        verdict = all(v < 0.01 for v in pairs)
        rule = "delta=0 collapse: pairwise L1 of equilibria < 0.01"
    else:
        verdict = (l1["mc_vs_third"] < ns.l1_max
                   and l1["mc_vs_fick"] >= ns.ratio_min * l1["mc_vs_third"])
        rule = (f"L1(MC,third) < {ns.l1_max:g} and L1(MC,fick) >= "
                f"{ns.ratio_min:g} * L1(MC,third)")

    hdr = _csv_header(params, scales, {"seed": sim.seed, "dt": repr(sim.dt),
                                       "n_traj": sim.n_traj,
                                       "stride": sim.stride})
    path = outdir / "histogram.csv"
    stats.histogram_csv(path, header=hdr)
    manifest.add(path)
    for name, pdf in (("peq_third", third), ("peq_fick", fick),
                      ("pde_steady", steady)):
        if pdf is None:
            continue
        path = outdir / f"{name}.csv"
        pdf.to_csv(path, header={**hdr, "kind": name})
        manifest.add(path)
    path = outdir / "moments.csv"
    _write_csv(path, hdr, {
        "n": [r["n"] for r in mom_rows],
        "theory": [r["theory"] for r in mom_rows],
        "mc": [r["mc"] for r in mom_rows],
        "mc_se": [r["mc_se"] for r in mom_rows],
        "quad_third": [r["quad_third"] for r in mom_rows],
        "quad_fick": [r["quad_fick"] for r in mom_rows],
    })
    manifest.add(path)

    report = {
        "l1": l1,
        "verdict": "PASS" if verdict else "FAIL",
        "rule": rule,
        "moments": [{k: ("inf" if v is DIVERGENT else v)
                     for k, v in r.items()} for r in mom_rows],
        "n_samples": stats.n_samples,
        "seed": sim.seed,
    }
    path = outdir / "report.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    manifest.add(path)

    from .figures import render_compare
    fig = outdir / "compare.png"
    render_compare(stats, third, fick, steady, fig,
                   title=f"gamma*tau={scales.gamma_tau:g}, "
                         f"delta={scales.delta:g}")
    manifest.add(fig)

    if ns.json:
        print(json.dumps(report, indent=2))
    else:
        for k, v in l1.items():
            print(f"L1 {k:>16} : {v:.5f}")
        print(f"verdict: {report['verdict']}  ({rule})")
    return 0 if verdict else ACCEPTANCE_ERROR


# -------------------------------------------------------------- ndcoeffs

def cmd_ndcoeffs(ns, ctx) -> int:
    cfg = ctx["cfg"]
    outdir, manifest = ctx["outdir"], ctx["manifest"]
    try:
        e = np.loadtxt(ns.e_matrix, delimiter=",", comments="#", ndmin=2)
        d = np.loadtxt(ns.d_matrix, delimiter=",", comments="#", ndmin=2)
        g = np.loadtxt(ns.g_matrix, delimiter=",", comments="#", ndmin=2)
    except OSError as exc:
        raise SystemExit_(USAGE_ERROR, f"cannot read matrix file: {exc}")
    eps = ns.epsilon if ns.epsilon is not None else float(cfg.get("epsilon", 0.0))
    tau = ns.tau if ns.tau is not None else float(cfg.get("tau", 1.0))
    model = NdModel(e_matrix=e, d_matrix=d, g_matrix=g, epsilon=eps, tau=tau,
                    kernel=ctx["kernel"])
    co = nd_coefficients(model)
    report = {
        "n": model.n,
        "k_drift": co.k_drift.tolist(),
        "k_third": co.k_third.tolist(),
        "err_drift": co.err_drift,
        "err_third": co.err_third,
        "epsilon": eps,
        "tau": tau,
    }
    path = outdir / "ndcoeffs.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    manifest.add(path)
    print(json.dumps(report, indent=2))
    return 0


# ------------------------------------------------------------------ main

def _build_parser() -> _Parser:
    p = _Parser(prog="nonfick", description=__doc__)
    p.add_argument("--config", type=str, default=None, help="key=value file")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", type=str, default="nonfick-out")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scales", help="derived scales and R sweeps")
    s.add_argument("--sweep", type=str, default=None,
                   metavar="gamma_tau=a:b:n")
    s.add_argument("--deltas", type=str, default="0.2,0.3,0.4,0.5")

    s = sub.add_parser("simulate", help="Monte Carlo ensemble")
    s.add_argument("--trajectory", type=int, default=None,
                   metavar="STREAM", help="also dump one sample path")

    sub.add_parser("peq", help="analytic equilibrium PDFs")

    s = sub.add_parser("evolve", help="march the master equation")
    s.add_argument("--fpe", action="store_true", help="drop the third-order term")
    s.add_argument("--snapshots", type=str, default=None, metavar="T1,T2,...")

    s = sub.add_parser("moments", help="equilibrium moment table")
    s.add_argument("--n-max", type=int, default=8)

    s = sub.add_parser("compare", help="MC vs analytic vs PDE comparison")
    s.add_argument("--l1-max", type=float, default=0.03)
    s.add_argument("--ratio-min", type=float, default=2.0)
    s.add_argument("--skip-pde", action="store_true")

    s = sub.add_parser("ndcoeffs", help="N-dimensional ME coefficients")
    s.add_argument("--e-matrix", type=str, required=True)
    s.add_argument("--d-matrix", type=str, required=True)
    s.add_argument("--g-matrix", type=str, required=True)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--tau", type=float, default=None)
    return p


_HANDLERS = {
    "scales": cmd_scales, "simulate": cmd_simulate, "peq": cmd_peq,
    "evolve": cmd_evolve, "moments": cmd_moments, "compare": cmd_compare,
    "ndcoeffs": cmd_ndcoeffs,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = parse_config(ns.config) if ns.config else {}
        if ns.command == "ndcoeffs" and not ns.config:
            params = scales = None
            kernel = _default_kernel()
        else:
            params, kernel = model_from_config(_with_defaults(cfg))
            scales = derived_scales(params, kernel)
        outdir = Path(ns.out)
        outdir.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(ns.command, argv, params=params, scales=scales,
                            seed=ns.seed)
        ctx = {"params": params, "kernel": kernel, "scales": scales,
               "cfg": cfg, "outdir": outdir, "manifest": manifest,
               "seed": ns.seed}
        code = _HANDLERS[ns.command](ns, ctx)
        manifest.write(outdir)
        return code
    except SystemExit_ as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (DivergenceError, ConvergenceError, AccuracyError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return USAGE_ERROR


def _default_kernel():
    from .model import CorrelationKernel
    return CorrelationKernel("OU")


def _with_defaults(cfg: dict) -> dict:
    return cfg


if __name__ == "__main__":
    sys.exit(main())
