"""Command-line front end: ``cutfem-ib converge | run | richardson``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig, load_config
from .errors import CutFEMError
from .exact import example1_solution
from .interface import Circle, CurveSpec, sample_initial, write_polygon_csv
from .stepper import Trajectory, chord_variance, run

log = logging.getLogger("cutfem_ib")

# fitted-rate thresholds checked by ``converge`` unless overridden
DEFAULT_RATES = {"min_l2_rate": 2.8, "min_h1_rate": 2.0, "min_p_l2_rate": 1.7, "min_p_h1_rate": 0.9}
ENERGY_RTOL = 1e-8


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")
    if not vals or any(v < 2 for v in vals):
        raise argparse.ArgumentTypeError(f"mesh sizes must be integers >= 2, got {text!r}")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError(f"h list must be strictly refining, got {text!r}")
    return vals


# --------------------------------------------------------------------------
# converge
# --------------------------------------------------------------------------
def cmd_converge(args) -> int:
    out = Path(args.output_dir)
    poly = sample_initial(CurveSpec(Circle(args.radius, (0.5, 0.5)), args.m, 1.0))
    exact = example1_solution(args.mu)
    t0 = time.time()
    vel, pres = dg.convergence_table(
        args.h_list, poly, exact, args.mu, args.gamma1, args.gamma2, clearance_cells=args.clearance_cells
    )
    dg.write_convergence_csv(vel, out / "converge_velocity.csv")
    dg.write_convergence_csv(pres, out / "converge_pressure.csv")
    for name, rows in (("velocity", vel), ("pressure", pres)):
        print(f"{name}:")
        for r in rows:
            cells = "  ".join(f"{k}={r.errors[k]:.4e} (k={dg.fmt(r.rates.get(k))})" for k in dg.NORMS)
            print(f"  1/h={r.inv_h:4d}  {cells}")
    checks = [
        ("velocity L2", vel, "L2", args.min_l2_rate),
        ("velocity H1", vel, "H1", args.min_h1_rate),
        ("pressure L2", pres, "L2", args.min_p_l2_rate),
        ("pressure H1", pres, "H1", args.min_p_h1_rate),
    ]
    ok = True
    if len(args.h_list) < 2:
        print("rate checks skipped: a single mesh defines no rate")
    else:
        for label, rows, norm, thresh in checks:
            if thresh is None:
                continue
            k = dg.fitted_rate(rows, norm)
            passed = k >= thresh
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'} fitted {label} rate {k:.3f} >= {thresh}")
    print(f"wrote {out}/converge_velocity.csv, converge_pressure.csv ({time.time() - t0:.1f} s)")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------
def _run_static(cfg: RunConfig, out: Path) -> int:
    """Manufactured steady solve on the configured curve and mesh."""
    poly = sample_initial(cfg.curve_spec(), cfg.h)
    exact = example1_solution(cfg.mu)
    sol = dg.solve_static(poly, cfg.n_cells, exact, cfg.mu, cfg.gamma1, cfg.gamma2, cfg.clearance_cells)
    e = dg.error_norms(sol.dofmap, sol.coeffs, sol.geom, exact)
    write_polygon_csv(poly, out / "interface_000000.csv")
    dg.write_interface_svg([poly], out / "interface_000000.svg")
    s_mid, tr = dg.traction_at_midpoints(sol.dofmap, sol.coeffs, 1, cfg.mu, poly)
    dg.write_csv(out / "traction.csv", ["s", "tx", "ty"], ([a, b, c] for a, (b, c) in zip(s_mid, tr)))
    if cfg.dump_fields:
        dg.write_fields_csv(out / "fields.csv", sol.dofmap, sol.coeffs, poly)
        dg.write_fields_vtk(out / "fields.vtk", sol.dofmap, sol.coeffs, poly)
    summary = {
        "config": cfg.resolved(),
        "status": "completed",
        "errors": {"velocity": e.velocity, "pressure": e.pressure},
        "solve_residual": sol.residual,
    }
    dg.write_json(out / "summary.json", summary)
    print(f"static solve: velocity L2 {e.velocity['L2']:.4e}, pressure L2 {e.pressure['L2']:.4e}")
    return 0


def trajectory_summary(traj: Trajectory, centroid_x: list[float], chord_var: list[float]) -> dict:
    """Checks and headline numbers written to ``summary.json``."""
    rows = traj.rows
    cfg = traj.config
    e0 = traj.e0
    tol = ENERGY_RTOL * e0
    slacks = [r.slack for r in rows[1:] if math.isfinite(r.slack)]
    increases = [b.total - a.total for a, b in zip(rows, rows[1:])]
    early = centroid_x[: min(len(centroid_x), 11)]
    summary = {
        "config": cfg.resolved(),
        "status": traj.status,
        "message": traj.message,
        "failed_step": traj.failed_step,
        "steps_completed": rows[-1].n,
        "final_time": rows[-1].t,
        "initial_energy": e0,
        "final_energy": rows[-1].total,
        "final_kinetic": rows[-1].kinetic,
        "final_elastic": rows[-1].elastic,
        "max_energy_increase": max(increases) if increases else 0.0,
        "energy_nonincreasing": all(d <= tol for d in increases),
        "min_slack": min(slacks) if slacks else None,
        "slack_ok": (min(slacks) >= -tol) if slacks else None,
        "max_identity_residual": max(
            (abs(r.identity_residual) for r in rows[1:] if math.isfinite(r.identity_residual)), default=None
        ),
        "max_solve_residual": max((r.solve_residual for r in rows[1:]), default=None),
        "final_area_deviation": rows[-1].area_deviation,
        "assumption1_failures": traj.assumption1_failures,
        "centroid_x_first_steps": early,
        "centroid_x_decreasing": bool(len(early) > 1 and np.all(np.diff(early) < 0)),
        "chord_variance_initial": chord_var[0],
        "chord_variance_final": chord_var[-1],
        "chord_variance_ratio": chord_var[-1] / chord_var[0] if chord_var[0] > 0 else None,
    }
    return summary


def _run_dynamic(cfg: RunConfig, out: Path) -> int:
    t0 = time.time()
    first = sample_initial(cfg.curve_spec(), cfg.h)
    centroid_x = [float(first.centroid()[0])]
    chord_var = [chord_variance(first)]

    def on_step(res):
        centroid_x.append(float(res.state.polygon.centroid()[0]))
        chord_var.append(chord_variance(res.state.polygon))
        r = res.row
        log.info("step %d t=%.6g E=%.10g slack=%.3e", r.n, r.t, r.total, r.slack)

    traj = run(cfg, on_step=on_step)
    dg.write_energy_csv(traj.rows, out / "energy.csv")
    dg.write_area_csv(traj.rows, out / "area.csv")
    dg.write_csv(
        out / "ledger.csv",
        list(traj.rows[0].as_dict()),
        ([*r.as_dict().values()] for r in traj.rows),
    )
    for k, poly in sorted(traj.snapshots.items()):
        write_polygon_csv(poly, out / f"interface_{k:06d}.csv")
        dg.write_interface_svg([poly], out / f"interface_{k:06d}.svg")
    dg.write_interface_svg([traj.snapshots[k] for k in sorted(traj.snapshots)], out / "interfaces.svg")
    dg.write_series_svg([r.t for r in traj.rows], [r.total for r in traj.rows], out / "energy.svg")
    final = traj.final
    if final is not None and final.coeffs is not None:
        if cfg.dump_fields:
            dg.write_fields_csv(out / "fields.csv", final.dofmap, final.coeffs, final.parts.geom.polygon)
            dg.write_fields_vtk(out / "fields.vtk", final.dofmap, final.coeffs, final.parts.geom.polygon)
        if cfg.dump_matrix:
            dg.write_matrix(out / "matrix.mtx", final.parts.matrix(cfg.penalty()))
    summary = trajectory_summary(traj, centroid_x, chord_var)
    summary["wall_time_s"] = round(time.time() - t0, 3)
    dg.write_json(out / "summary.json", summary)

    if traj.status != "completed":
        label = "instability diagnosed" if traj.status == "unstable" else "run failed"
        print(f"{label}: {traj.message}")
        return 2
    print(
        f"completed {summary['steps_completed']} steps: E0={summary['initial_energy']:.6g} "
        f"E={summary['final_energy']:.6g} min slack={dg.fmt(summary['min_slack'])} "
        f"area deviation={summary['final_area_deviation']:.4e}"
    )
    checks_ok = summary["energy_nonincreasing"] and summary["slack_ok"] is not False
    if cfg.nu == 1 and not checks_ok:
        print("FAIL energy monotonicity or per-step inequality violated")
        return 1
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "static":
        return _run_static(cfg, out)
    return _run_dynamic(cfg, out)


# --------------------------------------------------------------------------
# richardson
# --------------------------------------------------------------------------
def richardson_study(cfg: RunConfig, base_dt: float, halvings: int, t_probe: float):
    """Runs at ``base_dt / 2^k`` for ``k = 0..halvings``; returns (dts, differences, ratios, trajectories)."""
    if halvings < 2:
        raise CutFEMError("richardson needs at least 2 halvings")
    dts = [base_dt / 2**k for k in range(halvings + 1)]
    trajs = []
    for dt in dts:
        c = cfg.with_(dt=dt, t_final=t_probe, snapshot_times=(), snapshot_every=0)
        if abs(c.n_steps * dt - t_probe) > 1e-9 * t_probe:
            raise CutFEMError(f"t_probe={t_probe} is not a whole number of steps of dt={dt}")
        traj = run(c)
        if traj.status != "completed":
            raise CutFEMError(f"run with dt={dt} ended early ({traj.status}): {traj.message}")
        trajs.append(traj)
    ref = trajs[-1].final.parts.geom
    fields = [(t.final.dofmap, t.final.coeffs) for t in trajs]
    diffs = [dg.l2_difference(ref, a, b) for a, b in zip(fields, fields[1:])]
    ratios = [dg.richardson_ratio(a, b) for a, b in zip(diffs, diffs[1:])]
    return dts, diffs, ratios, trajs


def cmd_richardson(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output_dir)
    base = args.base_dt if args.base_dt is not None else cfg.dt
    halvings = args.halvings if args.halvings is not None else cfg.halvings
    t_probe = args.t_probe if args.t_probe is not None else cfg.t_final
    dts, diffs, ratios, _ = richardson_study(cfg, base, halvings, t_probe)
    rows = []
    for i, r in enumerate(ratios):
        rows.append([dts[i], dts[i + 1], dts[i + 2], diffs[i], diffs[i + 1], r])
    dg.write_csv(out / "richardson.csv", ["dt", "dt_half", "dt_quarter", "diff_coarse", "diff_fine", "r"], rows)
    for row in rows:
        print(f"dt={row[0]:g}: |u_dt - u_dt/2|={row[3]:.4e} |u_dt/2 - u_dt/4|={row[4]:.4e} r={dg.fmt(row[5])}")
    print(f"wrote {out}/richardson.csv")
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default="output", help="directory for all output files")
    common.add_argument("--threads", type=int, default=1, help="worker threads (the solver runs single-threaded)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cutfem-ib", description="CutFEM Stokes solver with an immersed elastic membrane")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("converge", parents=[common], help="static manufactured-solution convergence study")
    c.add_argument("--h-list", type=_int_list, default=[8, 16, 32, 64], help="cells per side, e.g. 8,16,32,64")
    c.add_argument("--m", type=int, default=400, help="interface segments (reference spacing 1/m)")
    c.add_argument("--radius", type=float, default=0.3)
    c.add_argument("--mu", type=float, default=1.0)
    c.add_argument("--gamma1", type=float, default=10.0)
    c.add_argument("--gamma2", type=float, default=10.0)
    c.add_argument("--clearance-cells", type=float, default=1.0)
    for name, val in DEFAULT_RATES.items():
        c.add_argument("--" + name.replace("_", "-"), type=float, default=val)
    c.set_defaults(func=cmd_converge)

    r = sub.add_parser("run", parents=[common], help="run a JSON-configured experiment")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("richardson", parents=[common], help="temporal Richardson ratios")
    q.add_argument("config")
    q.add_argument("--base-dt", type=float, default=None)
    q.add_argument("--halvings", type=int, default=None)
    q.add_argument("--t-probe", type=float, default=None)
    q.set_defaults(func=cmd_richardson)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be positive")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CutFEMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
