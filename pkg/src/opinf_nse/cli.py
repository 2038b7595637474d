"""Command-line front end.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures. ``OPINF_THREADS`` caps the worker threads of ``compare``.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dmd import dmd as fit_dmd
from .dmd import dmdc, dmdquad
from .experiment import (METHODS, SIGNALS, ExperimentConfig, ExperimentError, make_signal,
                         run_experiment)
from .io import (FormatError, ingest_snapshots, load_model, read_matrix, save_model,
                 save_reduced_model, save_snapshots, write_csv, write_matrix)
from .linalg import TruncationError
from .model import random_demo
from .opinf import (LINEAR, QUADRATIC, assemble_regressors, infer_velocity_model,
                    l_curve_scan, pick_tolerance)
from .pod import constraint_residual, divfree_correct, pod_basis
from .simulate import SimulationError, TimeGrid, estimate_derivatives, imex_euler_dae, stokes_steady
from .transform import build_leray

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_DEFAULTS = ExperimentConfig()


_SNAP_HELP = "snapshot directory, manifest, or block files as times=F,V=F[,P=F,U=F,Uperp=F]"


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if "(default:" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _add_model_args(p, model_file=True):
    g = p.add_argument_group("model")
    if model_file:
        g.add_argument("--model", help="model manifest (JSON); overrides the generator flags")
    g.add_argument("--seed", type=int, default=_DEFAULTS.seed, help="generator seed")
    g.add_argument("--nv", type=int, default=_DEFAULTS.n_v, help="velocity dimension")
    g.add_argument("--np", type=int, default=_DEFAULTS.n_p, help="pressure dimension")
    g.add_argument("--m", type=int, default=_DEFAULTS.m, help="number of inputs")
    g.add_argument("--inhomogeneous", action="store_true",
                   help="draw a constraint input matrix Bperp")


def _add_grid_args(p):
    g = p.add_argument_group("time grid")
    g.add_argument("--t0", type=float, default=_DEFAULTS.t0, help="start time")
    g.add_argument("--tend", type=float, default=_DEFAULTS.tend, help="end time")
    g.add_argument("--steps", type=int, default=_DEFAULTS.steps, help="number of time steps")
    g.add_argument("--inputs", default=_DEFAULTS.signal,
                   help=f"input signal name {SIGNALS} or a matrix file with one column per time")
    g.add_argument("--uperp", type=float, default=_DEFAULTS.uperp,
                   help="constant constraint input (inhomogeneous models only)")


def _add_order_args(p):
    p.add_argument("--order", type=int, action="append",
                   help=f"reduced order, repeatable (default: {list(_DEFAULTS.orders)})")


def _add_tol_args(p):
    g = p.add_argument_group("regularization")
    g.add_argument("--tol", type=float, default=None,
                   help="absolute singular-value cut; omitted means L-curve selection")
    g.add_argument("--lcurve-min", type=float, default=_DEFAULTS.lcurve_min,
                   help="smallest tolerance of the L-curve scan")
    g.add_argument("--lcurve-max", type=float, default=_DEFAULTS.lcurve_max,
                   help="largest tolerance of the L-curve scan")
    g.add_argument("--lcurve-points", type=int, default=_DEFAULTS.lcurve_points,
                   help="number of log-spaced tolerances")


def _snapshot_source(source):
    # "times=t.csv,V=v.oifs,..." names the block files directly
    if "=" not in source:
        return source
    items = [item.split("=", 1) for item in source.split(",")]
    if any(len(item) != 2 for item in items):
        raise ValueError(f"cannot parse --snapshots {source!r}")
    return dict(items)


def _snapshots(source):
    return ingest_snapshots(_snapshot_source(source))


def _model(args):
    if getattr(args, "model", None):
        return load_model(args.model)
    return random_demo(args.seed, args.nv, args.np, args.m, args.inhomogeneous)


def _orders(args):
    orders = args.order or list(_DEFAULTS.orders)
    if min(orders) < 1:
        raise ValueError("--order must be at least 1")
    return orders


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tols(args):
    if not 0 < args.lcurve_min < args.lcurve_max or args.lcurve_points < 3:
        raise ValueError("need 0 < --lcurve-min < --lcurve-max and --lcurve-points >= 3")
    return np.logspace(np.log10(args.lcurve_min), np.log10(args.lcurve_max), args.lcurve_points)


def cmd_generate(args):
    model = random_demo(args.seed, args.nv, args.np, args.m, args.inhomogeneous)
    path = _out(args) / "model.json"
    save_model(path, model)
    _emit({"model": str(path), "n_v": model.n_v, "n_p": model.n_p, "m": model.m,
           "homogeneous": model.homogeneous})


def cmd_simulate(args):
    model = _model(args)
    grid = TimeGrid(args.t0, args.tend, args.steps)
    u = None
    if model.m:
        if args.inputs in SIGNALS:
            u = make_signal(args.inputs, model.m)
        else:
            U = read_matrix(args.inputs)
            if U.shape != (model.m, grid.N + 1):
                raise ValueError(f"input file has shape {U.shape}, expected {(model.m, grid.N + 1)}")
            u = lambda t: np.array([np.interp(t, grid.times, row) for row in U])  # noqa: E731
    up = None if model.Bperp is None else args.uperp
    if up is None:
        v0 = np.zeros(model.n_v)
    else:
        v0, _ = stokes_steady(model, None if u is None else u(args.t0), up)
    snaps = imex_euler_dae(model, v0, u, grid, uperp=up)
    out = _out(args)
    save_snapshots(out, snaps)
    save_model(out / "model.json", model)
    _emit({"snapshots": str(out / "snapshots.json"), "n_times": snaps.n_times})


def cmd_pod(args):
    snaps = _snapshots(args.snapshots)
    out = _out(args)
    sv = np.linalg.svd(snaps.V, compute_uv=False)
    write_csv(out / "singular_values.csv",
              np.column_stack([np.arange(1, sv.size + 1), sv]), ["index", "sigma"])
    model = load_model(args.model) if args.model else None
    report = {"singular_values": str(out / "singular_values.csv"), "bases": {}}
    for r in _orders(args):
        basis = pod_basis(snaps.V, r)
        if args.divfree:
            if model is None:
                raise ValueError("--divfree needs --model")
            basis = divfree_correct(basis, build_leray(model))
        path = out / f"basis_r{r}.oifs"
        write_matrix(path, basis.vectors)
        entry = {"file": str(path), "columns": basis.r}
        if model is not None and model.n_p:
            entry["constraint_residual"] = constraint_residual(model.A12, basis)
        report["bases"][str(r)] = entry
    _emit(report)


def _reduced_data(args, r):
    snaps = _snapshots(args.snapshots)
    basis = pod_basis(snaps.V, r).vectors
    return snaps, basis, basis.T @ snaps.V


def cmd_infer(args):
    out = _out(args)
    method = (args.method or ["opinf"])[-1]
    if method not in ("opinf", "opinf_lin"):
        raise ValueError("infer supports --method opinf or opinf_lin")
    structure = QUADRATIC if method == "opinf" else LINEAR
    report = {}
    for r in _orders(args):
        snaps, basis, Xhat = _reduced_data(args, r)
        Xdot = estimate_derivatives(Xhat, snaps.dt)
        st = structure if snaps.U is not None else tuple(b for b in structure if b != "input")
        tol = args.tol
        if tol is None:
            D = assemble_regressors(Xhat, snaps.U, None, st)
            tol = pick_tolerance(l_curve_scan(D, Xdot, _tols(args)))
        rom = infer_velocity_model(Xhat, Xdot, snaps.U, st, tol)
        path = out / f"{method}_r{r}.json"
        save_reduced_model(path, rom, extra={"basis": basis})
        report[str(r)] = {"model": str(path), "tol": float(tol)}
    _emit(report)


def cmd_dmd(args):
    out = _out(args)
    methods = args.method or ["dmd", "dmdc", "dmdquad"]
    bad = set(methods) - {"dmd", "dmdc", "dmdquad"}
    if bad:
        raise ValueError(f"dmd supports dmd, dmdc and dmdquad, not {sorted(bad)}")
    report = {}
    for r in _orders(args):
        snaps, basis, Xhat = _reduced_data(args, r)
        for method in methods:
            if method == "dmd":
                fit = fit_dmd(Xhat, tol=args.tol)
            elif method == "dmdc":
                if snaps.U is None:
                    raise ValueError("dmdc needs inputs in the snapshot set")
                fit = dmdc(Xhat, snaps.U, tol=args.tol)
            else:
                fit = dmdquad(Xhat, snaps.U, tol=args.tol)
            files = {}
            for name in ("A", "B", "H"):
                M = getattr(fit, name)
                if M is not None:
                    files[name] = str(out / f"{method}_r{r}.{name}.oifs")
                    write_matrix(files[name], M)
            report[f"{method}_r{r}"] = files
    _emit(report)


def cmd_lcurve(args):
    out = _out(args)
    rows, report = [], {}
    for r in _orders(args):
        snaps, _, Xhat = _reduced_data(args, r)
        Xdot = estimate_derivatives(Xhat, snaps.dt)
        st = QUADRATIC if snaps.U is not None else ("state", "quadratic")
        points = l_curve_scan(assemble_regressors(Xhat, snaps.U, None, st), Xdot, _tols(args))
        tol = pick_tolerance(points)
        report[str(r)] = float(tol)
        rows += [[r, p.tol, p.residual_norm, p.solution_norm, p.rank, p.tol == tol]
                 for p in points]
    write_csv(out / "lcurve.csv", np.array(rows, dtype=float),
              ["order", "tol", "residual_norm", "solution_norm", "rank", "chosen"])
    _emit({"lcurve": str(out / "lcurve.csv"), "chosen_tol": report})


def cmd_ingest(args):
    snaps = _snapshots(args.snapshots)
    report = {"n_times": snaps.n_times, "n_v": snaps.V.shape[0], "uniform": snaps.uniform,
              "has_pressure": snaps.P is not None, "has_inputs": snaps.U is not None}
    if args.model:
        model = load_model(args.model)
        if model.n_v != snaps.V.shape[0]:
            raise ValueError("dimension mismatch between model and snapshots")
        res = model.A12.T @ snaps.V
        if snaps.Uperp is not None and model.Bperp is not None:
            res = res + model.Bperp @ snaps.Uperp
        report["constraint_residual"] = float(np.linalg.norm(res) / np.linalg.norm(snaps.V))
    if args.out:
        save_snapshots(_out(args), snaps)
        report["exported"] = str(Path(args.out) / "snapshots.json")
    _emit(report)


def cmd_compare(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.model:
        cfg.model_path = args.model
    if args.snapshots:
        cfg.snapshots_path = _snapshot_source(args.snapshots)
    for key, attr in (("seed", "seed"), ("nv", "n_v"), ("np", "n_p"), ("m", "m"),
                      ("t0", "t0"), ("tend", "tend"), ("steps", "steps"), ("tol", "tol"),
                      ("lcurve_min", "lcurve_min"), ("lcurve_max", "lcurve_max"),
                      ("lcurve_points", "lcurve_points"), ("uperp", "uperp"),
                      ("integrator", "integrator"), ("rollout", "rollout"), ("out", "out")):
        val = getattr(args, key)
        if val is not None and (args.config is None or val != args._defaults.get(key)):
            setattr(cfg, attr, val)
    if args.inhomogeneous:
        cfg.inhomogeneous = True
    if args.inputs is not None:
        if args.inputs in SIGNALS:
            cfg.signal = args.inputs
        else:
            cfg.inputs_path = args.inputs
    if args.order:
        cfg.orders = tuple(args.order)
    if args.method:
        cfg.methods = tuple(args.method)
    summary = run_experiment(cfg)
    _emit(summary.as_dict())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="opinf-nse",
        description="Operator inference and baselines for quadratic index-2 DAEs.",
        formatter_class=_Formatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=_Formatter)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "write a random demo model")
    _add_model_args(p, model_file=False)
    p.add_argument("--out", default="model", help="output directory")

    p = add("simulate", cmd_simulate, "integrate the DAE with semi-implicit Euler")
    _add_model_args(p)
    _add_grid_args(p)
    p.add_argument("--out", default="snapshots", help="output directory")

    p = add("pod", cmd_pod, "compute POD bases of a snapshot set")
    p.add_argument("--snapshots", required=True, help=_SNAP_HELP)
    p.add_argument("--model", help="model manifest, for constraint residuals")
    p.add_argument("--divfree", action="store_true", help="project the basis with the Leray projector")
    _add_order_args(p)
    p.add_argument("--out", default="pod", help="output directory")

    p = add("infer", cmd_infer, "learn reduced models by operator inference")
    p.add_argument("--snapshots", required=True, help=_SNAP_HELP)
    p.add_argument("--method", action="append", choices=("opinf", "opinf_lin"),
                   help="model structure (default: opinf)")
    _add_order_args(p)
    _add_tol_args(p)
    p.add_argument("--out", default="rom", help="output directory")

    p = add("dmd", cmd_dmd, "fit DMD, DMDc and quadratic DMD maps")
    p.add_argument("--snapshots", required=True, help=_SNAP_HELP)
    p.add_argument("--method", action="append", choices=("dmd", "dmdc", "dmdquad"),
                   help="repeatable (default: all three)")
    _add_order_args(p)
    p.add_argument("--tol", type=float, default=None,
                   help="absolute singular-value cut; omitted means 1e-10 relative")
    p.add_argument("--out", default="dmd", help="output directory")

    p = add("lcurve", cmd_lcurve, "scan regularization tolerances and pick the L-curve corner")
    p.add_argument("--snapshots", required=True, help=_SNAP_HELP)
    _add_order_args(p)
    _add_tol_args(p)
    p.add_argument("--out", default="lcurve", help="output directory")

    p = add("ingest", cmd_ingest, "validate an external snapshot set")
    p.add_argument("--snapshots", required=True, help=_SNAP_HELP)
    p.add_argument("--model", help="model manifest, for the constraint residual")
    p.add_argument("--out", help="re-export the snapshots as blobs into this directory")

    p = add("compare", cmd_compare, "run every method at every order and score them")
    p.add_argument("--config", help="JSON experiment config; flags given explicitly override it")
    _add_model_args(p)
    p.add_argument("--snapshots", help="use this snapshot set instead of simulating")
    _add_grid_args(p)
    _add_order_args(p)
    p.add_argument("--method", action="append", choices=METHODS,
                   help=f"repeatable (default: {list(METHODS)})")
    _add_tol_args(p)
    p.add_argument("--integrator", choices=("imex", "rk4"), default=_DEFAULTS.integrator,
                   help="full-order integrator")
    p.add_argument("--rollout", choices=("imex", "rk4"), default=_DEFAULTS.rollout,
                   help="integrator for continuous-time reduced models")
    p.add_argument("--out", default=_DEFAULTS.out, help="output directory")
    p.set_defaults(_defaults={a.dest: a.default for a in p._actions})
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (SimulationError, TruncationError, np.linalg.LinAlgError, ExperimentError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FormatError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
