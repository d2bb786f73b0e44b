"""Command-line entry point: ``quasimodes <subcommand> [--config PATH] ...``.

Exit status: 0 on success, 1 when ``validate`` finds a failing check,
2 for configuration errors, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import config as cfgmod
from .beams import build_beam, check_spectrum_capture, measure_defect
from .conclab import (CubeMeasureSpec, bad_set_audit, cone_certificate, coupled_experiment,
                      sample_conformal_factor, separable_experiment)
from .doublewell import (DoubleWellProblem, arnold_audit, build_well_quasimode, solve_wells,
                         splitting_sweep)
from .flow import (NearCrossingError, build_branches, check_hadamard, monotonicity_audit,
                   sojourn_measure)
from .geodesic import find_equators, is_elliptic_generic, outer_equator, poincare_map
from .spectral import SpectralWindow, assemble_coupled, eigs_in_window, global_spectrum
from .surface import (ConformalFamily, SurfaceError, SurfaceOfRevolution, constant_factor,
                      make_coupled_factor, make_flat_factor, total_curvature)

log = logging.getLogger("quasimodes")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


# -- builders -----------------------------------------------------------------

def build_surface(sec: cfgmod.SurfaceSection) -> SurfaceOfRevolution:
    if sec.kind == "torus":
        return SurfaceOfRevolution.torus(sec.R, sec.a)
    if sec.kind == "flat":
        return SurfaceOfRevolution.flat(sec.rho, sec.L)
    return SurfaceOfRevolution.fourier(sec.coefficients, sec.L_s)


def build_family(cfg: cfgmod.RunConfig, n_t: int) -> ConformalFamily:
    surf = build_surface(cfg.surface)
    fs = cfg.factor
    s_gamma = outer_equator(surf).s_gamma
    if fs.kind == "flat":
        factor = make_flat_factor(surf, fs.N, fs.amplitude, s_gamma)
    elif fs.kind == "coupled":
        factor = make_coupled_factor(surf, fs.N, fs.amplitude, fs.coupling, s_gamma)
    else:
        factor = constant_factor(fs.value)
    return ConformalFamily.uniform(surf, factor, n_t)


def m_range(sec) -> list[int]:
    return list(range(sec.m_min, sec.m_max + 1, sec.m_step))


# -- output helpers -----------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _svg(path: Path, curves, xlabel: str, ylabel: str, title: str) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "quasimodes"
    fig, ax = plt.subplots(figsize=(6, 4))
    for x, y, label in curves:
        ax.plot(x, y, label=label, lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if any(label for _, _, label in curves):
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# -- subcommands --------------------------------------------------------------

def cmd_validate(cfg, out: Path) -> tuple[list, dict]:
    checks = []

    def add(name, error, tol):
        checks.append({"check": name, "error": float(error), "tol": tol, "pass": bool(error <= tol)})

    flat = ConformalFamily(SurfaceOfRevolution.flat(), constant_factor(0.0))
    mu = global_spectrum(flat, 0.0, 10.0, N_s=1024).eigenvalues[:20]
    exact = np.sort([j * j + k * k for j in range(-4, 5) for k in range(-4, 5)])[:20]
    add("flat_torus_first_20", np.max(np.abs(mu - exact) / np.maximum(exact, 1)), 1e-4)

    c = 0.7
    fam = ConformalFamily(SurfaceOfRevolution.torus(), constant_factor(c))
    m0 = global_spectrum(fam, 0.0, 6.0, N_s=256).eigenvalues
    m1 = global_spectrum(fam, 0.5, 6.0 * math.exp(0.5 * c), N_s=256).eigenvalues[:m0.size]
    add("constant_factor_scaling", np.max(np.abs(m1 - math.exp(0.5 * c) * m0)[1:] / m1[1:]), 1e-10)

    surf = build_surface(cfg.surface)
    add("gauss_bonnet", abs(total_curvature(surf, 4096)), 1e-8)

    geo = outer_equator(SurfaceOfRevolution.torus())
    pm = poincare_map(geo)
    add("torus_winding", abs(pm.winding_theta_full - 2 * math.pi * math.sqrt(3.0)), 1e-6)

    path = write_json(out / "validate.json", {"checks": checks})
    for ch in checks:
        log.info("%-26s error=%.3e tol=%.0e %s", ch["check"], ch["error"], ch["tol"],
                 "pass" if ch["pass"] else "FAIL")
    return [path], {"failures": sum(not ch["pass"] for ch in checks)}


def cmd_geodesic(cfg, out: Path):
    surf = build_surface(cfg.surface)
    records = []
    for geo in find_equators(surf):
        rec = {"s_gamma": geo.s_gamma, "T": geo.period, "stability": geo.stability}
        try:
            pm = poincare_map(geo)
            rec.update(trace=pm.trace, theta_full=pm.winding_theta_full,
                       classification=str(is_elliptic_generic(pm)))
        except Exception as exc:  # degenerate flat profile: no isolated geodesic
            rec.update(trace=None, theta_full=None, classification=f"unavailable: {exc}")
        records.append(rec)
    return [write_json(out / "geodesic.json", records)], {}


def cmd_spectrum(cfg, out: Path, jobs: int):
    fam = build_family(cfg, cfg.grid.n_t)
    rows = []
    if cfg.grid.backend == "separable":
        if not fam.separable:
            raise cfgmod.ConfigError("separable backend needs a rotation-invariant factor")
        for t in fam.t_grid:
            sol = global_spectrum(fam, t, cfg.spectrum.Lambda_max, N_s=cfg.grid.N_s,
                                  method=cfg.grid.method)
            for j, (mu, res, n) in enumerate(zip(sol.eigenvalues, sol.residuals, sol.sector)):
                rows.append((t, "separable", int(n), j, mu, res))
    else:
        sp = cfg.spectrum
        if sp.window_half_width <= 0:
            raise cfgmod.ConfigError("coupled backend needs [spectrum] window_center and window_half_width")
        w = SpectralWindow(sp.window_center, sp.window_half_width)
        label = f"[{w.lo!r};{w.hi!r}]"
        for t in fam.t_grid:
            sol = eigs_in_window(assemble_coupled(fam, t, cfg.grid.N_s, cfg.grid.N_phi), w)
            for j, (mu, res) in enumerate(zip(sol.eigenvalues, sol.residuals)):
                rows.append((t, "coupled", label, j, mu, res))
    path = write_csv(out / "spectrum.csv", ["t", "backend", "n_or_window", "index", "mu", "residual"], rows)
    return [path], {"rows": len(rows)}


def cmd_beam(cfg, out: Path, plot: bool):
    fam = build_family(cfg, cfg.grid.n_t)
    bs = cfg.beam
    geo = outer_equator(fam.base)
    pm = poincare_map(geo)
    rows, beams = [], []
    for m in m_range(bs):
        beam = build_beam(geo, m, bs.m1, N_s=bs.N_s, poincare=pm, maslov_p=bs.maslov_p)
        beams.append(beam)
        reps = [measure_defect(beam, fam, t, bs.deltas) for t in fam.t_grid]
        worst = max(reps, key=lambda r: r.C_m)
        captured = all(check_spectrum_capture(beam, fam, t, bs.c_safety).captured for t in fam.t_grid)
        rows.append((m, bs.m1, beam.lambda_m, beam.sigma, worst.C_m, *worst.localization_mass, captured))
    header = ["m", "m1", "lambda_m", "sigma_m", "C_m"] + [f"loc_mass@{d!r}" for d in bs.deltas] + ["captured"]
    files = [write_csv(out / "beam.csv", header, rows)]
    if plot:
        files.append(_svg(out / "beam.svg", [(b.s, b.profile, f"m={b.m}") for b in beams[::max(1, len(beams) // 4)]],
                          "s", "u(s)", "beam profiles"))
    return files, {"all_captured": all(r[-1] for r in rows)}


def cmd_flow(cfg, out: Path, jobs: int, plot: bool):
    fl = cfg.flow
    fam = build_family(cfg, fl.n_t)
    table = build_branches(fam, fl.Lambda_max, N_s=fl.N_s, jobs=jobs)
    rows = [(t, j, table.mu[k, j], table.mass[k, j], table.gap[k, j])
            for k, t in enumerate(table.t_grid) for j in range(table.J)]
    files = [write_csv(out / "flow.csv", ["t", "j", "mu", "mass", "gap"], rows)]
    hadamard = []
    for t in fl.hadamard_t:
        k = int(np.argmin(np.abs(table.t_grid - t)))
        for j in range(1, table.J):
            try:
                r = check_hadamard(table, fam, j, float(table.t_grid[k]), fl.hadamard_delta, fl.gap_floor)
            except NearCrossingError as exc:
                hadamard.append({"j": j, "t": float(table.t_grid[k]), "skipped": str(exc)})
                continue
            hadamard.append({"j": j, "t": r.t, "mu": r.mu, "predicted": r.predicted, "fd": r.fd,
                             "richardson": r.richardson, "relative": r.relative})
    viol = monotonicity_audit(table)
    speed = table.mu * table.mass
    m_floor = float(np.min(speed[:, 1:])) if table.J > 1 else 0.0
    sojourn = []
    for j in range(1, table.J):
        lo, hi = table.mu[0, j], table.mu[-1, j]
        mid = 0.5 * (lo + hi)
        rep = sojourn_measure(table.mu[:, j], table.t_grid, (mid - 0.05 * (hi - lo), mid + 0.05 * (hi - lo)),
                              m_floor)
        sojourn.append({"j": j, "measured": rep.measured, "bound": rep.bound, "ok": rep.verdict})
    rel = [h["relative"] for h in hadamard if "relative" in h]
    files.append(write_json(out / "flow_residuals.json", {
        "J": table.J, "monotonicity_violations": viol, "hadamard": hadamard,
        "max_relative_residual": max(rel) if rel else None, "m_floor": m_floor, "sojourn": sojourn}))
    if plot:
        files.append(_svg(out / "flow.svg", [(table.t_grid, table.mu[:, j], "") for j in range(table.J)],
                          "t", "mu_j(t)", "eigenvalue branches"))
    return files, {"J": table.J, "violations": len(viol)}


def cmd_concentrate(cfg, out: Path, jobs: int, plot: bool):
    cs = cfg.concentrate
    fam = build_family(cfg, cs.n_t)
    ms = m_range(cs)
    if cs.regime == "separable":
        if not fam.separable:
            raise cfgmod.ConfigError("separable regime needs a rotation-invariant factor")
        scheme, report = separable_experiment(fam, ms, N_s=cs.N_s, q_rule=cs.q_rule, pad=cs.pad, jobs=jobs)
    else:
        scheme, report = coupled_experiment(fam, ms, N_s=cs.N_s, N_phi=cs.N_phi, c=cs.c,
                                            q_rule=cs.q_rule, jobs=jobs)
    audit = bad_set_audit(report, cs.epsilons, cs.m0 or None)
    files = [write_csv(out / "masses.csv", ["m", "t", "mu", "mass"], report.rows()),
             write_csv(out / "badset.csv", ["m", "epsilon", "measured", "bound", "verdict"], audit.rows())]
    sup = report.sup_mass
    files.append(write_json(out / "summary.json", {
        "regime": cs.regime,
        "good_set_estimate": audit.good_set_estimate,
        "K": audit.K, "K_fit": audit.K_fit, "K_min": audit.K_min,
        "monotone_in_epsilon": audit.monotone_in_eps,
        "hypotheses_ok": report.hypotheses_ok, "hypothesis_note": report.hypothesis_note,
        "scheme": {"m": scheme.m, "center": scheme.center, "half_width": scheme.half_width,
                   "q": scheme.q, "provenance": scheme.provenance,
                   "sum_l": scheme.sum_l, "sum_l_over_q": scheme.sum_l_over_q,
                   "tail_decreasing": scheme.tail_decreasing, "q_decreasing": scheme.q_decreasing},
        "sup_mass_over_q": (sup / scheme.q[:, None]).max(axis=1),
        "all_pass": audit.all_pass}))
    if plot:
        files.append(_svg(out / "concentrate.svg",
                          [(report.t_grid, sup[i] / scheme.q[i], f"m={m}") for i, m in enumerate(scheme.m)],
                          "t", "sup mass / q_m", "mass in the windows"))
    return files, {"all_pass": audit.all_pass}


def cmd_doublewell(cfg, out: Path, hbars, jobs: int, plot: bool):
    dw = cfg.doublewell
    rows, last = [], None
    for h in hbars:
        prob = DoubleWellProblem(h, X_cut=dw.X_cut, N_x=dw.N_x)
        spec = solve_wells(prob, dw.k_max)
        qm = build_well_quasimode(prob, "right")
        r = arnold_audit(spec, qm)
        rows.append((h, r.E_even, r.E_odd, r.splitting, r.defect, r.overlap_even, r.overlap_odd,
                     r.min_single_mode_distance))
        last = (prob, spec, qm)
    files = [write_csv(out / "doublewell.csv", ["hbar", "E_even", "E_odd", "splitting", "defect", "overlap_e",
                                                "overlap_o", "min_single_mode_dist"], rows)]
    summary = {}
    if len(hbars) >= 2:
        fit = splitting_sweep(hbars, jobs=jobs, X_cut=dw.X_cut, N_x=dw.N_x)
        summary = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
        files.append(write_json(out / "doublewell_fit.json", summary))
    if plot and last:
        prob, spec, qm = last
        files.append(_svg(out / "doublewell.svg", [(prob.x, spec.vectors[:, 0], "even"),
                                                   (prob.x, spec.vectors[:, 1], "odd"),
                                                   (prob.x, qm.u, "quasimode")],
                          "x", "amplitude", f"hbar={prob.hbar!r}"))
    return files, summary


def cmd_sample_metric(cfg, out: Path, seed: int, plot: bool):
    sm = cfg.sampler
    surf = build_surface(cfg.surface)
    spec = CubeMeasureSpec(surf, sm.N, sm.n_basis, s_gamma=outer_equator(surf).s_gamma)
    factor = sample_conformal_factor(spec, seed)
    s = surf.grid(sm.n_grid)
    f = factor(s)
    files = [write_csv(out / "sampled_factor.csv", ["s", "f"], zip(s, f))]
    cert = cone_certificate(spec, factor, sm.n_grid)
    cert.update(seed=seed, coefficients=factor.meta["coefficients"], anchor=factor.meta["anchor"],
                tail_fraction=spec.tail_fraction())
    files.append(write_json(out / "sampled_factor.json", cert))
    if plot:
        files.append(_svg(out / "sampled_factor.svg", [(s, f, "")], "s", "f(s)", f"seed {seed}"))
    return files, {"cone_ok": cert["ok"]}


# -- driver -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--jobs", type=int, help="override [run] jobs")
    common.add_argument("--out", type=Path, help="override [run] out")
    common.add_argument("--plot", action="store_true", help="also write SVG plots")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="quasimodes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [("validate", "run the oracle checks"),
                           ("geodesic", "equators and their Poincare maps"),
                           ("spectrum", "eigenvalues on the t-grid"),
                           ("beam", "Gaussian beams, defects and spectral capture"),
                           ("flow", "eigenvalue branches and derivative checks"),
                           ("concentrate", "masses in the quasi-mode windows and bad sets"),
                           ("doublewell", "double-well quasi-modes versus exact modes"),
                           ("sample-metric", "draw a conformal factor from the cube measure"),
                           ("dump-config", "print the effective configuration")]:
        sp = sub.add_parser(name, parents=[common], help=helptext)
        if name == "doublewell":
            sp.add_argument("--hbar", type=float, nargs="+", help="override [doublewell] hbar")
    return p


def _effective_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.out is not None:
        over["out"] = str(args.out)
    if args.plot:
        over["plot"] = True
    if over:
        cfg = cfg.override("run", **over)
    if getattr(args, "hbar", None):
        cfg = cfg.override("doublewell", hbar=tuple(args.hbar))
    cfgmod.validate(cfg)
    return cfg


def run(command: str, cfg: cfgmod.RunConfig) -> int:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs, plot = cfg.run.jobs, cfg.run.plot
    start = time.perf_counter()
    status = EXIT_OK
    if command == "validate":
        files, info = cmd_validate(cfg, out)
        status = EXIT_CHECK if info["failures"] else EXIT_OK
    elif command == "geodesic":
        files, info = cmd_geodesic(cfg, out)
    elif command == "spectrum":
        files, info = cmd_spectrum(cfg, out, jobs)
    elif command == "beam":
        files, info = cmd_beam(cfg, out, plot)
    elif command == "flow":
        files, info = cmd_flow(cfg, out, jobs, plot)
    elif command == "concentrate":
        files, info = cmd_concentrate(cfg, out, jobs, plot)
    elif command == "doublewell":
        files, info = cmd_doublewell(cfg, out, list(cfg.doublewell.hbar), jobs, plot)
    elif command == "sample-metric":
        files, info = cmd_sample_metric(cfg, out, cfg.run.seed, plot)
    else:
        raise ValueError(command)
    manifest = {
        "command": command, "config": cfg.to_dict(), "config_hash": cfg.hash,
        "seed": cfg.run.seed, "wall_time_s": time.perf_counter() - start,
        "versions": {"quasimodes": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "files": sorted(f.name for f in files), "summary": info, "exit_status": status,
    }
    write_json(out / "manifest.json", manifest)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _effective_config(args)
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "dump-config":
        sys.stdout.write(cfgmod.dumps(cfg))
        return EXIT_OK
    try:
        return run(args.command, cfg)
    except (cfgmod.ConfigError, SurfaceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        module = type(exc).__module__.rpartition(".")[2]
        print(f"numerical failure in {module}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
