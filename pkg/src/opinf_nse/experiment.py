"""Experiment harness: simulate, reduce with every method, roll out, score.

A run is driven by an :class:`ExperimentConfig` and writes into one output
directory::

    summary.json            per method and order: error, residual, tol
    timings.json            wall-clock seconds (kept apart so summaries
                            are byte-identical across reruns)
    singular_values.csv     snapshot singular values
    constraint_residual.csv ||A12^T V|| / ||V|| of each basis used
    lcurve.csv              L-curve points of every operator-inference fit
    trajectories/fom.csv    reference trajectory
    trajectories/<method>_r<order>.csv
"""

import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dmd import dmd as fit_dmd
from .dmd import dmdc, dmdquad, rollout
from .io import ingest_snapshots, load_model, read_matrix, write_csv
from .linalg import TruncationError
from .model import SnapshotSet, random_demo
from .opinf import (LINEAR, QUADRATIC, assemble_regressors, infer_velocity_model,
                    l_curve_scan, pick_tolerance)
from .pod import (constraint_residual, corrected_galerkin_reduce, divfree_correct,
                  galerkin_reduce, numerical_rank, pod_basis)
from .simulate import (SimulationError, TimeGrid, estimate_derivatives, imex_euler_dae,
                       imex_euler_ode, integrate_ode, stokes_steady)
from .transform import build_leray, decompose_velocity, ode_rhs, pressure_from_velocity

__all__ = [
    "METHODS",
    "SIGNALS",
    "ExperimentConfig",
    "ExperimentError",
    "MethodResult",
    "ResultSummary",
    "error_l2",
    "make_signal",
    "run_experiment",
]

log = logging.getLogger(__name__)

METHODS = ("opinf", "opinf_lin", "pod", "dmd", "dmdc", "dmdquad")
SIGNALS = ("sin-decay", "zero", "step")


def make_signal(name, m):
    """Input signal ``t -> (m,)`` by name.

    ``sin-decay`` drives channel ``k`` with ``sin(2 (k+1) t) exp(-0.05 t)``,
    ``step`` is one on every channel and ``zero`` is zero.
    """
    if name == "sin-decay":
        freq = 2.0 * np.arange(1, m + 1)
        return lambda t: np.sin(freq * t) * np.exp(-0.05 * t)
    if name == "step":
        return lambda t: np.ones(m)
    if name == "zero":
        return lambda t: np.zeros(m)
    raise ValueError(f"unknown signal {name!r}; choose from {SIGNALS}")


@dataclass
class ExperimentConfig:
    """Settings of one run. ``tol=None`` selects the tolerance by L-curve."""

    seed: int = 0
    n_v: int = 4
    n_p: int = 1
    m: int = 1
    inhomogeneous: bool = False
    uperp: float = 1.0
    model_path: str = None
    snapshots_path: str = None
    t0: float = 0.0
    tend: float = 10.0
    steps: int = 1000
    signal: str = "sin-decay"
    inputs_path: str = None
    integrator: str = "imex"
    rollout: str = "rk4"
    orders: tuple = (3,)
    methods: tuple = METHODS
    tol: float = None
    lcurve_min: float = 1e-11
    lcurve_max: float = 1e-6
    lcurve_points: int = 11
    out: str = "results"

    def __post_init__(self):
        self.orders = tuple(int(r) for r in self.orders)
        self.methods = tuple(self.methods)

    def validate(self):
        if not self.orders or min(self.orders) < 1:
            raise ValueError("orders must be a nonempty list of integers >= 1")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.lcurve_min < self.lcurve_max:
            raise ValueError("need 0 < lcurve_min < lcurve_max")
        if self.lcurve_points < 3:
            raise ValueError("lcurve_points must be at least 3")
        for key in ("integrator", "rollout"):
            if getattr(self, key) not in ("imex", "rk4"):
                raise ValueError(f"{key} must be 'imex' or 'rk4'")
        if self.signal not in SIGNALS:
            raise ValueError(f"unknown signal {self.signal!r}")
        if self.snapshots_path is None:
            TimeGrid(self.t0, self.tend, self.steps)
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["orders"], d["methods"] = list(self.orders), list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


class ExperimentError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


@dataclass
class MethodResult:
    method: str
    order: int
    status: str = "ok"
    error: float = None
    constraint_residual: float = None
    tol: float = None
    basis_rank: int = None
    wall_time: float = 0.0
    trajectory: np.ndarray = field(default=None, repr=False)
    lcurve: list = field(default=None, repr=False)

    def as_dict(self):
        return {"method": self.method, "order": self.order, "status": self.status,
                "error": self.error, "constraint_residual": self.constraint_residual,
                "tol": self.tol, "basis_rank": self.basis_rank}


@dataclass
class ResultSummary:
    config: dict
    n_times: int
    snapshot_rank: int
    results: list
    failed_stage: str = None

    def get(self, method, order):
        for res in self.results:
            if res.method == method and res.order == order:
                return res
        raise KeyError((method, order))

    def errors(self):
        return {(r.method, r.order): r.error for r in self.results}

    def as_dict(self):
        return {"config": self.config, "n_times": self.n_times,
                "snapshot_rank": self.snapshot_rank, "failed_stage": self.failed_stage,
                "results": [r.as_dict() for r in self.results]}


def _trapezoid_weights(n, dt):
    w = np.full(n, float(dt))
    if n > 1:
        w[0] = w[-1] = 0.5 * dt
    return w


def error_l2(reference, candidate, dt):
    """Relative time-domain L2 error with trapezoidal weights.

    Parameters
    ----------
    reference, candidate : (n, K) array_like
        Trajectories on the same uniform grid, one column per time.
    dt : float

    Examples
    --------
    >>> error_l2([[1.0, 1.0]], [[1.0, 0.0]], 1.0)  # doctest: +ELLIPSIS
    0.7071...
    """
    ref = np.atleast_2d(np.asarray(reference, dtype=float))
    cand = np.atleast_2d(np.asarray(candidate, dtype=float))
    if ref.shape != cand.shape:
        raise ValueError(f"trajectory shapes differ: {ref.shape} vs {cand.shape}")
    w = _trapezoid_weights(ref.shape[1], dt)
    den = np.sum(w * np.sum(ref ** 2, axis=0))
    if den == 0:
        raise ValueError("reference trajectory has zero norm")
    return float(np.sqrt(np.sum(w * np.sum((ref - cand) ** 2, axis=0)) / den))


class _Data:
    """Everything the methods share: model, snapshots, inputs and projector."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.model = self._model(cfg)
        self.proj = None if self.model is None else build_leray(self.model)
        self.snaps = self._snapshots(cfg)
        if not self.snaps.uniform:
            raise ExperimentError("simulate", "snapshot times are not uniformly spaced")
        self.dt = self.snaps.dt
        self.times = self.snaps.times
        self.grid = TimeGrid(self.times[0], self.times[-1], self.times.size - 1)
        self.V = self.snaps.V
        self.sv = np.linalg.svd(self.V, compute_uv=False)
        self.rank = numerical_rank(self.sv)
        up = self.snaps.Uperp
        self.uperp_const = None if up is None else float(up[0, 0])
        if up is not None and np.ptp(up) > 0:
            raise ExperimentError("simulate", "time-varying u_perp is not supported")

    def _model(self, cfg):
        if cfg.model_path:
            return load_model(cfg.model_path)
        if cfg.snapshots_path:
            return None
        return random_demo(cfg.seed, cfg.n_v, cfg.n_p, cfg.m, cfg.inhomogeneous)

    def _inputs_fn(self, m):
        if self.cfg.inputs_path:
            U = read_matrix(self.cfg.inputs_path)
            return _interpolant(self.grid_times(), U)
        return make_signal(self.cfg.signal, m)

    def grid_times(self):
        return TimeGrid(self.cfg.t0, self.cfg.tend, self.cfg.steps).times

    def _snapshots(self, cfg):
        if cfg.snapshots_path:
            snaps = ingest_snapshots(cfg.snapshots_path)
            if snaps.U is not None:
                self.u = _interpolant(snaps.times, snaps.U)
            else:
                self.u = None
            return snaps
        model = self.model
        self.u = self._inputs_fn(model.m) if model.m else None
        grid = TimeGrid(cfg.t0, cfg.tend, cfg.steps)
        up = cfg.uperp if model.Bperp is not None else None
        if up is None:
            # zero initial condition
            v0 = np.zeros(model.n_v)
        else:
            v0, _ = stokes_steady(model, None if self.u is None else self.u(cfg.t0), up)
        if cfg.integrator == "imex":
            return imex_euler_dae(model, v0, self.u, grid, uperp=up)
        rhs = lambda v, t: ode_rhs(model, v, None if self.u is None else self.u(t),  # noqa: E731
                                   proj=self.proj)
        V = integrate_ode(rhs, v0, grid)
        U = None if self.u is None else np.column_stack([self.u(t) for t in grid.times])
        P = pressure_from_velocity(model, V, U, proj=self.proj)
        Up = None if up is None else np.full((1, grid.times.size), float(up))
        return SnapshotSet(times=grid.times, V=V, P=P, U=U, Uperp=Up)

    @property
    def U(self):
        return self.snaps.U

    def u_at(self, t):
        return None if self.u is None else self.u(t)

    def residual(self, basis):
        if self.model is None or self.model.n_p == 0:
            return None
        return constraint_residual(self.model.A12, basis)


def _interpolant(times, U):
    U = np.atleast_2d(np.asarray(U, dtype=float))
    times = np.asarray(times, dtype=float)
    if U.shape[1] != times.size:
        raise ValueError(f"inputs have {U.shape[1]} columns for {times.size} times")
    return lambda t: np.array([np.interp(t, times, row) for row in U])


def _rollout_ode(data, rom, x0, uperp=None):
    def rhs(x, t):
        return rom.rhs(x, data.u_at(t), uperp)

    if data.cfg.rollout == "imex":
        return imex_euler_ode(rom.A, rhs, x0, data.grid)
    return integrate_ode(rhs, x0, data.grid)


def _opinf(data, res, basis, structure):
    cfg = data.cfg
    Xhat = basis.T @ data.V
    Xdot = estimate_derivatives(Xhat, data.dt)
    U = data.U if "input" in structure and data.U is not None else None
    if U is None:
        structure = tuple(b for b in structure if b != "input")
    D = assemble_regressors(Xhat, U, None, structure)
    tols = np.logspace(np.log10(cfg.lcurve_min), np.log10(cfg.lcurve_max), cfg.lcurve_points)
    res.lcurve = l_curve_scan(D, Xdot, tols)
    tol = cfg.tol if cfg.tol is not None else pick_tolerance(res.lcurve)
    res.tol = float(tol)
    rom = infer_velocity_model(Xhat, Xdot, U, structure, tol)
    return basis @ _rollout_ode(data, rom, Xhat[:, 0])


def _pod(data, res, r):
    model = data.model
    if model is None:
        raise _Skip("needs a model file")
    if data.uperp_const is None:
        # r >= n_v means no reduction at all
        full = np.eye(model.n_v) if r >= model.n_v else pod_basis(data.V, r)
        basis = divfree_correct(full, data.proj)
        rom = galerkin_reduce(model, basis, force_ode=True)
        W = basis.vectors
        res.basis_rank = basis.r
        res.constraint_residual = data.residual(W)
        return W @ _rollout_ode(data, rom, W.T @ data.V[:, 0])
    up = data.uperp_const
    v_top, _ = decompose_velocity(model, data.V, up, proj=data.proj)
    rank = numerical_rank(np.linalg.svd(v_top, compute_uv=False))
    basis = divfree_correct(pod_basis(v_top, min(r, rank)), data.proj)
    rom, s = corrected_galerkin_reduce(model, basis, data.proj)
    W = basis.vectors
    res.basis_rank = basis.r
    res.constraint_residual = data.residual(W)
    X = _rollout_ode(data, rom, W.T @ v_top[:, 0], uperp=up)
    return W @ X + np.outer(s, np.full(X.shape[1], up))


def _discrete(data, res, basis, method):
    Xhat = basis.T @ data.V
    U = data.U
    if method == "dmd":
        fit = fit_dmd(Xhat)
        X = rollout(fit, Xhat[:, 0], steps=Xhat.shape[1] - 1)
    elif method == "dmdc":
        if U is None:
            raise _Skip("needs inputs")
        fit = dmdc(Xhat, U)
        X = rollout(fit, Xhat[:, 0], U)
    else:
        fit = dmdquad(Xhat, U)
        X = rollout(fit, Xhat[:, 0], U, steps=Xhat.shape[1] - 1)
    return basis @ X


class _Skip(Exception):
    pass


def _run_one(data, method, r):
    res = MethodResult(method, r)
    start = time.perf_counter()
    try:
        full = method == "pod" and data.model is not None and r >= data.model.n_v
        if r > data.rank and not full:
            raise _Skip(f"order exceeds snapshot rank {data.rank}")
        if method == "pod":
            traj = _pod(data, res, r)
        else:
            basis = pod_basis(data.V, r).vectors
            res.basis_rank = r
            res.constraint_residual = data.residual(basis)
            if method == "opinf":
                traj = _opinf(data, res, basis, QUADRATIC)
            elif method == "opinf_lin":
                traj = _opinf(data, res, basis, LINEAR)
            else:
                traj = _discrete(data, res, basis, method)
        res.error = error_l2(data.V, traj, data.dt)
        if not np.isfinite(res.error):
            raise SimulationError(-1)
        res.trajectory = traj
    except _Skip as exc:
        res.status = f"skipped: {exc}"
    except SimulationError as exc:
        res.status = f"unstable: {exc}"
        res.error = None
    except (TruncationError, np.linalg.LinAlgError) as exc:
        res.status = f"failed: {exc}"
    res.wall_time = time.perf_counter() - start
    return res


def _threads():
    try:
        return max(1, int(os.environ.get("OPINF_THREADS", "1")))
    except ValueError:
        return 1


def _write_trajectory(path, times, V):
    header = ["t"] + [f"v{i}" for i in range(V.shape[0])]
    write_csv(path, np.column_stack([times, V.T]), header)


def _flush(out, summary, data, timings):
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(
        json.dumps(summary.as_dict(), indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    if data is None:
        return
    traj = out / "trajectories"
    traj.mkdir(exist_ok=True)
    _write_trajectory(traj / "fom.csv", data.times, data.V)
    write_csv(out / "singular_values.csv",
              np.column_stack([np.arange(1, data.sv.size + 1), data.sv]), ["index", "sigma"])
    rows, lrows = [], []
    for res in summary.results:
        if res.trajectory is not None:
            _write_trajectory(traj / f"{res.method}_r{res.order}.csv", data.times, res.trajectory)
        if res.constraint_residual is not None:
            rows.append(f"{res.method},{res.order},{res.constraint_residual!r}")
        for p in res.lcurve or ():
            chosen = int(res.tol is not None and p.tol == res.tol)
            lrows.append(f"{res.method},{res.order},{p.tol!r},{p.residual_norm!r},"
                         f"{p.solution_norm!r},{p.rank},{chosen}")
    (out / "constraint_residual.csv").write_text(
        "\n".join(["method,order,residual"] + rows) + "\n")
    (out / "lcurve.csv").write_text(
        "\n".join(["method,order,tol,residual_norm,solution_norm,rank,chosen"] + lrows) + "\n")


def run_experiment(config, write=True):
    """Run every requested method at every requested order.

    Parameters
    ----------
    config : ExperimentConfig
    write : bool
        Write the artifacts into ``config.out``.

    Returns
    -------
    ResultSummary

    Raises
    ------
    ExperimentError
        When the model, snapshot or basis stage fails. Whatever finished
        before the failure is still written.
    """
    config.validate()
    out = Path(config.out)
    summary = ResultSummary(config=config.to_dict(), n_times=0, snapshot_rank=0, results=[])
    try:
        data = _Data(config)
    except ExperimentError as exc:
        summary.failed_stage = exc.stage
        if write:
            _flush(out, summary, None, {})
        raise
    except (SimulationError, np.linalg.LinAlgError) as exc:
        summary.failed_stage = "simulate"
        if write:
            _flush(out, summary, None, {})
        raise ExperimentError("simulate", str(exc)) from exc
    summary.n_times = int(data.times.size)
    summary.snapshot_rank = int(data.rank)

    jobs = [(meth, r) for r in config.orders for meth in config.methods]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        summary.results = list(pool.map(lambda job: _run_one(data, *job), jobs))
    for res in summary.results:
        log.info("%s r=%d: %s error=%s", res.method, res.order, res.status, res.error)
    if write:
        timings = {f"{r.method}_r{r.order}": r.wall_time for r in summary.results}
        _flush(out, summary, data, timings)
    return summary
