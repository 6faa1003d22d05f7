"""Command line entry point: ``maxlor <subcommand> [options]``.

Exit codes: 0 when every check passed, 2 when a physical or numerical
assertion failed (ProjectionLost, a failed neutrality check, ...), 1 for
usage errors such as a bad flag or an invalid config.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import harness, kernels
from .charge import check_neutrality, check_wiener, from_spec
from .errors import MaxlorError, PhysicsAssertion
from .fields import FourierGrid

EXIT_OK, EXIT_USAGE, EXIT_PHYSICS = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _vector(text: str) -> tuple:
    parts = [float(x) for x in text.replace(" ", "").split(",") if x]
    if len(parts) == 1:
        return (parts[0], 0.0, 0.0)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected one number or three comma separated numbers")
    return tuple(parts)


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if getattr(args, "t_final", None) is not None:
        cfg.t_final = args.t_final
        if cfg.window[1] > cfg.t_final:
            cfg.window = (min(cfg.window[0], 0.25 * cfg.t_final), cfg.t_final)
    cfg.validate()
    return cfg


def _echo(text: str) -> None:
    print(text, flush=True)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = harness.output_dir(cfg.out_dir)
    start = time.perf_counter()
    report = harness.run_perturbed_soliton(cfg)
    harness.write_csv(out / "series.csv", report.columns())
    traj = report.trajectory.columns()
    harness.write_csv(out / "trajectory.csv", {_unit(k): v for k, v in traj.items()})
    summary = report.summary() | {"config": cfg.to_dict(), "kernels": kernels.IMPLEMENTATION}
    harness.write_json(out / "summary.json", summary)
    _echo(f"simulate: {len(report.times)} outputs in {time.perf_counter() - start:.1f} s -> {out}")
    for name, fit in report.fits.items():
        _echo(f"  fit {name}: exponent {fit.exponent:+.3f} (R^2 {fit.r_squared:.3f})")
    return EXIT_OK


def cmd_scatter(args) -> int:
    cfg = _load(args)
    out = harness.output_dir(cfg.out_dir)
    outputs = np.arange(0.0, cfg.t_final + 1e-9, cfg.output_every)
    wanted = np.linspace(args.start, cfg.t_final, max(3, args.count))
    picks = np.unique([outputs[np.argmin(np.abs(outputs - t))] for t in wanted if t >= outputs[0]])
    if len(picks) < 3 or args.start > cfg.t_final:
        raise MaxlorError("fewer than three extraction times after --start")
    report = harness.run_perturbed_soliton(cfg, keep_states=picks)
    scat = harness.extract_scattered_field(report.states, report.state_times, cfg.rho(), cfg.grid())
    harness.write_csv(out / "scattering.csv", scat.columns())
    decreasing = bool(np.all(np.diff(scat.cauchy_residuals) < 0))
    harness.write_json(out / "scattering.json", {
        "times": scat.times, "cauchy_residuals": scat.cauchy_residuals, "strictly_decreasing": decreasing,
        "psi_plus_norm": scat.psi_plus.energy_norm(cfg.grid()), "config": cfg.to_dict(),
    })
    _echo(f"scatter: residuals {np.array2string(scat.cauchy_residuals, precision=3)}; decreasing={decreasing}")
    return EXIT_OK if decreasing else EXIT_PHYSICS


def cmd_frozen(args) -> int:
    from .linearized import integrate_frozen

    cfg = _load(args)
    out = harness.output_dir(cfg.out_dir)
    rho, grid = cfg.rho(), cfg.grid()
    z0 = harness.make_perturbation(cfg, rho, grid)
    traj = integrate_frozen(rho, np.array(cfg.v0), z0, grid, cfg.t_final, dt=args.dt or cfg.dt,
                            delta=cfg.delta, output_every=cfg.output_every, project_first=True)
    cols = traj.columns()
    harness.write_csv(out / "frozen.csv", {_unit(k): v for k, v in cols.items()})
    fit = harness.fit_decay(traj.times, traj.weighted_norm, cfg.window)
    harness.write_json(out / "frozen.json", {"fit": fit.as_dict(), "config": cfg.to_dict(),
                                              "max_secular": float(np.abs(traj.secular).max())})
    _echo(f"frozen: exponent {fit.exponent:+.3f} (R^2 {fit.r_squared:.3f}) over {fit.window}")
    return EXIT_OK


def cmd_soliton(args) -> int:
    from .soliton import soliton_momentum, stationary_residual
    from .symplectic import omega_matrix

    rho = from_spec({"family": args.family, "radius": args.radius})
    grid = FourierGrid(args.n, args.L)
    v = np.array(args.v)
    res = stationary_residual(rho, v, grid)
    gram = omega_matrix(rho, v, grid)
    data = {
        "v": v, "grid": {"n": grid.n, "L": grid.L}, "stationary_residual": res,
        "momentum": soliton_momentum(rho, v, grid), "omega_plus_eigenvalues": gram.eigenvalues,
        "omega_zero_block_residual": gram.zero_block_residual,
    }
    out = harness.output_dir(args.out_dir or "out")
    harness.write_json(out / "soliton.json", data)
    _echo(f"soliton: stationary residual {res:.3e}; omega+ eigenvalues {np.array2string(gram.eigenvalues, precision=4)}")
    return EXIT_OK if res < args.tol else EXIT_PHYSICS


def cmd_spectral(args) -> int:
    from . import spectral

    rho = from_spec({"family": args.family, "radius": args.radius})
    v = args.v
    omegas = args.omegas if args.omegas else list(np.linspace(args.omega_min, args.omega_max, args.count))
    rows = {k: [] for k in ("omega [1/time]", "c1_re", "c1_im", "c_re", "c_im", "f1_re", "f1_im", "f_re", "f_im",
                            "d1_re", "d1_im", "d_re", "d_im", "im_d1", "im_d", "norm_Minv")}
    checks = {"c_row_sum": 0.0, "inverse_residual": 0.0, "structure_residual": 0.0}
    for om in omegas:
        inv = spectral.m_inverse_structure(rho, v, om)
        co = inv.coeffs
        vals = [om]
        for name in ("c1", "c", "f1", "f", "d1", "d"):
            z = complex(getattr(co, name))
            vals += [z.real, z.imag]
        vals += [co.d1.imag, co.d.imag, inv.norm]
        for key, val in zip(rows, vals):
            rows[key].append(val)
        checks["c_row_sum"] = max(checks["c_row_sum"], co.checks["c_row_sum"])
        checks["inverse_residual"] = max(checks["inverse_residual"], inv.inverse_residual)
        checks["structure_residual"] = max(checks["structure_residual"], inv.structure_residual)
    taylor = spectral.taylor_data(rho, v)
    det = spectral.m_matrix(rho, v, 1.0)
    positive = [bool(math.copysign(1.0, om) * im > 0) for om, im in zip(omegas, rows["im_d1"])] + \
               [bool(math.copysign(1.0, om) * im > 0) for om, im in zip(omegas, rows["im_d"])]
    out = harness.output_dir(args.out_dir or "out")
    harness.write_csv(out / "spectral.csv", rows)
    summary = checks | {
        "det_residual_at_1": det.det_residual,
        "taylor": {"I1": taylor.i1, "I": taylor.i, "J1": taylor.j1, "J": taylor.j,
                   "den1": taylor.den1, "den": taylor.den, "positivity": taylor.positivity},
        "sign_omega_im_d_positive": all(positive),
        "speed": v,
    }
    harness.write_json(out / "spectral.json", summary)
    _echo(f"spectral: {len(omegas)} frequencies; max c-row sum {checks['c_row_sum']:.1e}; "
          f"det residual {det.det_residual:.1e}")
    return EXIT_OK if all(positive) else EXIT_PHYSICS


def cmd_check_rho(args) -> int:
    """Print the neutrality and Wiener reports as JSON; the Wiener scan is advisory."""
    import json

    rho = from_spec({"family": args.family, "radius": args.radius})
    neut = check_neutrality(rho)
    wien = check_wiener(rho, args.k_max / rho.support_radius)
    data = {"neutrality": neut.as_dict(), "wiener": wien.as_dict()}
    if args.out_dir:
        harness.write_json(harness.output_dir(args.out_dir) / "check_rho.json", data)
    print(json.dumps(harness.to_jsonable(data), indent=2, sort_keys=True), flush=True)
    return EXIT_OK if neut.passed else EXIT_PHYSICS


def cmd_fit_decay(args) -> int:
    import csv

    with open(args.csv, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise MaxlorError("empty CSV")
    names = list(rows[0])
    tcol = _column(names, args.time_column)
    ycol = _column(names, args.column)
    t = np.array([float(r[tcol]) for r in rows])
    y = np.array([float(r[ycol]) for r in rows])
    fit = harness.fit_decay(t, y, args.window)
    data = fit.as_dict() | {"column": ycol, "source": str(args.csv)}
    if args.out_dir:
        harness.write_json(harness.output_dir(args.out_dir) / "fit.json", data)
    _echo(f"fit-decay: exponent {fit.exponent:+.4f} +- {fit.stderr:.4f}, amplitude {fit.amplitude:.4g}, "
          f"R^2 {fit.r_squared:.4f} ({fit.points} points)")
    return EXIT_OK


def _column(names, wanted: str) -> str:
    for name in names:
        if name == wanted or name.split(" [")[0] == wanted:
            return name
    raise MaxlorError(f"column {wanted!r} not found; available: {names}")


_UNITS = {"t": "time", "q": "length", "P": "momentum", "qdot": "c", "H": "energy", "E": "field", "gradA": "field"}


def _unit(name: str) -> str:
    base = name.split("_")[0]
    unit = _UNITS.get(base, "1")
    return f"{name} [{unit}]"


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    common.add_argument("--out-dir", default=None, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=None,
                        help="thread limit for BLAS/OpenMP pools; the solver itself is sequential")

    parser = _Parser(prog="maxlor", description="Solitons of a charged particle coupled to the Maxwell field.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def with_config(name, helptext):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", default=None, help="TOML experiment config")
        p.add_argument("--t-final", type=float, default=None, help="override the final time")
        return p

    p = with_config("simulate", "perturbed soliton run with projection and decay fits")
    p.set_defaults(func=cmd_simulate)
    p = with_config("scatter", "perturbed run followed by scattered-field extraction")
    p.add_argument("--count", type=int, default=5, help="number of extraction times")
    p.add_argument("--start", type=float, default=5.0, help="earliest extraction time")
    p.set_defaults(func=cmd_scatter)
    p = with_config("frozen", "linearized flow at fixed soliton parameters from projected data")
    p.add_argument("--dt", type=float, default=None, help="time step (defaults to the config value)")
    p.set_defaults(func=cmd_frozen)

    def with_rho(name, helptext):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--family", default="reference", help="charge family: reference, bump, indicator")
        p.add_argument("--radius", type=float, default=1.0, help="support radius")
        return p

    p = with_rho("soliton", "stationary residual and symplectic Gram matrix of one soliton")
    p.add_argument("--v", type=_vector, default=(0.3, 0.0, 0.0), help="velocity, 'vx' or 'vx,vy,vz'")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--L", type=float, default=32.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_soliton)
    p = with_rho("spectral", "coefficient sweep along the imaginary axis")
    p.add_argument("--v", type=float, default=0.3, help="speed |v|")
    p.add_argument("--omegas", type=float, nargs="*", default=None, help="explicit frequencies")
    p.add_argument("--omega-min", type=float, default=0.5)
    p.add_argument("--omega-max", type=float, default=5.0)
    p.add_argument("--count", type=int, default=10)
    p.set_defaults(func=cmd_spectral)
    p = with_rho("check-rho", "neutrality and Wiener scan of a charge density")
    p.add_argument("--k-max", type=float, default=40.0, help="scan limit in units of 1/radius")
    p.set_defaults(func=cmd_check_rho)
    p = sub.add_parser("fit-decay", parents=[common], help="log-log fit of one CSV column")
    p.add_argument("csv", type=Path)
    p.add_argument("--column", required=True)
    p.add_argument("--time-column", default="t")
    p.add_argument("--window", type=float, nargs=2, default=None, metavar=("T0", "T1"))
    p.set_defaults(func=cmd_fit_decay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    harness.set_threads(args.threads)
    try:
        return args.func(args)
    except PhysicsAssertion as exc:
        print(f"maxlor {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (MaxlorError, ValueError, OSError) as exc:
        print(f"maxlor {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
