"""Acceptance gate: one test per criterion, each printing a pass/fail line."""

import time

import numpy as np
import pytest

from opinf_nse.dmd import DiscreteModel, dmd, dmdc, dmdquad, rollout
from opinf_nse.experiment import ExperimentConfig, error_l2, make_signal, run_experiment
from opinf_nse.linalg import quadratic_features
from opinf_nse.model import random_demo
from opinf_nse.opinf import (infer_pressure_map, infer_velocity_model, l_curve_scan,
                             assemble_regressors)
from opinf_nse.pod import (constraint_residual, divfree_correct, galerkin_reduce, pod_basis,
                           numerical_rank)
from opinf_nse.simulate import (TimeGrid, estimate_derivatives, imex_euler_dae, integrate_ode,
                                stokes_steady)
from opinf_nse.transform import build_leray, ode_rhs, pressure_from_velocity

SIN_DECAY = make_signal("sin-decay", 1)

# relative L2 errors of the default demo run, frozen from the first oracle run
REGRESSION = {
    "opinf": 0.0010554705530693403,
    "dmdquad": 0.0021536795639658752,
    "dmdc": 0.009379742268559312,
    "dmd": 1.0,
}


def test_criterion_01_inference_matches_galerkin(acceptance):
    start = time.perf_counter()
    model = random_demo(7, 40, 6, 2)
    proj = build_leray(model)
    rng = np.random.default_rng(1)
    K = 800
    V = proj.apply(rng.standard_normal((40, K)))
    U = rng.standard_normal((2, K))
    Vdot = np.column_stack([ode_rhs(model, V[:, k], U[:, k], proj=proj) for k in range(K)])
    W = divfree_correct(pod_basis(V, 34), proj)
    X, Xdot = W.vectors.T @ V, W.vectors.T @ Vdot
    rom = infer_velocity_model(X, Xdot, U, tol=0.0)
    oracle = galerkin_reduce(model, W, force_ode=True)
    elapsed = time.perf_counter() - start
    err = max(np.linalg.norm(rom.A - oracle.A), np.linalg.norm(rom.H - oracle.H),
              np.linalg.norm(rom.B - oracle.B))
    acceptance(1, W.r == 34 and err <= 1e-8 and elapsed < 10,
               f"max operator error {err:.2e} (<= 1e-8), {elapsed:.2f} s (< 10 s)")


def test_criterion_02_leray_invariants(acceptance):
    start = time.perf_counter()
    worst = [0.0, 0.0, 0.0]
    count = 0
    for seed in range(60):
        rng = np.random.default_rng(seed)
        n_v = int(rng.integers(3, 20))
        n_p = int(rng.integers(1, n_v))
        model = random_demo(seed, n_v, n_p, 1)
        proj = build_leray(model)
        x = rng.standard_normal(n_v)
        a12 = np.linalg.norm(model.A12)
        px = proj.apply(x)
        worst[0] = max(worst[0], np.linalg.norm(proj.apply(px) - px) / np.linalg.norm(x))
        worst[1] = max(worst[1], np.linalg.norm(model.A12.T @ px) / (a12 * np.linalg.norm(x)))
        worst[2] = max(worst[2], np.linalg.norm(proj.apply_t(model.A12)) / a12)
        count += 1
    elapsed = time.perf_counter() - start
    acceptance(2, count >= 50 and max(worst) <= 1e-10 and elapsed < 5,
               f"{count} models, worst ratios {worst[0]:.1e}/{worst[1]:.1e}/{worst[2]:.1e}"
               f" (<= 1e-10), {elapsed:.2f} s (< 5 s)")


def _dae_vs_ode(N):
    model = random_demo(0, 4, 1, 1)
    proj = build_leray(model)
    grid = TimeGrid(0.0, 1.0, N)
    v0, _ = stokes_steady(model, SIN_DECAY(0.0))
    snaps = imex_euler_dae(model, v0, SIN_DECAY, grid)
    ref = integrate_ode(lambda v, t: ode_rhs(model, v, SIN_DECAY(t), proj=proj), v0, grid)
    return model, snaps, error_l2(ref, snaps.V, grid.dt), grid.dt


def test_criterion_03_dae_ode_equivalence(acceptance):
    _, _, e1, dt1 = _dae_vs_ode(256)
    _, _, e2, dt2 = _dae_vs_ode(512)
    ratio = e1 / e2
    acceptance(3, e1 <= 5 * dt1 and e2 <= 5 * dt2 and 1.7 <= ratio <= 2.3,
               f"errors {e1 / dt1:.3f} dt and {e2 / dt2:.3f} dt (<= 5 dt), "
               f"halving ratio {ratio:.3f} (in [1.7, 2.3])")


def test_criterion_04_pressure_consistency(acceptance):
    worst = 0.0
    for N in (256, 512):
        model, snaps, _, dt = _dae_vs_ode(N)
        proj = build_leray(model)
        recovered = np.column_stack([
            pressure_from_velocity(model, snaps.V[:, k], snaps.U[:, k], proj=proj)
            for k in range(snaps.n_times)])
        worst = max(worst, error_l2(snaps.P, recovered, dt) / dt)
    acceptance(4, worst <= 10, f"pressure error {worst:.3f} dt (<= 10 dt)")


def test_criterion_05_exact_recovery(acceptance):
    rng = np.random.default_rng(5)
    r, m, K = 3, 2, 60
    A = rng.standard_normal((r, r))
    H = rng.standard_normal((r, 6))
    B = rng.standard_normal((r, m))
    X = rng.standard_normal((r, K))
    U = rng.standard_normal((m, K))
    Xdot = A @ X + H @ quadratic_features(X) + B @ U
    errs = {}
    rom = infer_velocity_model(X, Xdot, U, tol=0.0)
    errs["infer_velocity_model"] = max(np.linalg.norm(rom.A - A), np.linalg.norm(rom.H - H),
                                       np.linalg.norm(rom.B - B))
    Ap = rng.standard_normal((2, r))
    Hp = rng.standard_normal((2, 6))
    Bp = rng.standard_normal((2, m))
    pmap = infer_pressure_map(Ap @ X + Hp @ quadratic_features(X) + Bp @ U, X, U, tol=0.0)
    errs["infer_pressure_map"] = max(np.linalg.norm(pmap.Ap - Ap), np.linalg.norm(pmap.Hp - Hp),
                                     np.linalg.norm(pmap.Bp - Bp))
    # discrete maps: contractive A and a small quadratic part keep trajectories bounded
    Ad = 0.5 * np.linalg.qr(rng.standard_normal((r, r)))[0]
    Bd = rng.standard_normal((r, m))
    Hd = 0.05 * rng.standard_normal((r, 6))
    Ud = rng.uniform(-1, 1, (m, 80))
    fit = dmd(rollout(DiscreteModel(Ad), rng.standard_normal(r), steps=3))
    errs["dmd"] = np.linalg.norm(fit.A - Ad)
    fit = dmdc(rollout(DiscreteModel(Ad, Bd), rng.standard_normal(r), Ud), Ud)
    errs["dmdc"] = max(np.linalg.norm(fit.A - Ad), np.linalg.norm(fit.B - Bd))
    Xq = rollout(DiscreteModel(Ad, Bd, Hd), 0.3 * rng.standard_normal(r), Ud)
    fit = dmdquad(Xq, Ud)
    errs["dmdquad"] = max(np.linalg.norm(fit.A - Ad), np.linalg.norm(fit.H - Hd),
                          np.linalg.norm(fit.B - Bd))
    worst = max(errs, key=errs.get)
    acceptance(5, all(e <= 1e-9 for e in errs.values()),
               f"worst recovery error {errs[worst]:.1e} ({worst}, <= 1e-9)")


def test_criterion_06_demo_ordering(acceptance, tmp_path):
    summary = run_experiment(ExperimentConfig(out=str(tmp_path)))
    e = {name: summary.get(name, 3).error for name in REGRESSION}
    ordered = e["opinf"] < e["dmdquad"] < e["dmdc"] <= e["dmd"]
    frozen = all(np.isclose(e[k], v, rtol=1e-6, atol=0) for k, v in REGRESSION.items())
    acceptance(6, ordered and frozen,
               "opinf {opinf:.3e} < dmdquad {dmdquad:.3e} < dmdc {dmdc:.3e} <= dmd {dmd:.3e}"
               .format(**e) + f", regression values {'match' if frozen else 'DIFFER'}")


def test_criterion_07_inhomogeneous(acceptance, tmp_path):
    cfg = ExperimentConfig(inhomogeneous=True, orders=(4,), methods=("opinf", "pod"),
                           steps=2000, out=str(tmp_path))
    summary = run_experiment(cfg)
    opinf, pod = summary.get("opinf", 4), summary.get("pod", 4)
    # uncorrected POD basis of the raw velocity snapshots
    model = random_demo(cfg.seed, cfg.n_v, cfg.n_p, cfg.m, inhomogeneous=True)
    v0, _ = stokes_steady(model, SIN_DECAY(0.0), cfg.uperp)
    snaps = imex_euler_dae(model, v0, SIN_DECAY, TimeGrid(cfg.t0, cfg.tend, cfg.steps),
                           uperp=cfg.uperp)
    rank = numerical_rank(np.linalg.svd(snaps.V, compute_uv=False))
    raw = constraint_residual(model.A12, pod_basis(snaps.V, rank))
    ok = (summary.snapshot_rank == rank == 4 and opinf.error <= 1e-3 and raw > 1e-6
          and pod.error <= 1e-3)
    acceptance(7, ok, f"raw opinf {opinf.error:.2e} (<= 1e-3), uncorrected POD residual "
                      f"{raw:.2e} (> 1e-6), corrected POD {pod.error:.2e} (<= 1e-3)")


def test_criterion_08_lcurve_monotone(acceptance):
    rng = np.random.default_rng(8)
    X = rng.standard_normal((4, 200)) * np.logspace(0, -6, 4)[:, None]
    D = assemble_regressors(X, rng.standard_normal((1, 200)))
    rhs = rng.standard_normal((4, 200))
    points = l_curve_scan(D, rhs, np.logspace(-14, 2, 33))
    res = np.array([p.residual_norm for p in points])
    sol = np.array([p.solution_norm for p in points])
    ok = len(points) >= 10 and np.all(np.diff(res) >= 0) and np.all(np.diff(sol) <= 0)
    ranks = sorted({p.rank for p in points})
    acceptance(8, ok, f"{len(points)} tolerances, ranks {ranks[0]}..{ranks[-1]}, "
                      "residual non-decreasing and solution norm non-increasing")


def test_criterion_09_pod_optimality(acceptance):
    worst, cases = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, K = int(rng.integers(2, 15)), int(rng.integers(2, 15))
        S = rng.standard_normal((n, K))
        s = np.linalg.svd(S, compute_uv=False)
        for r in range(1, numerical_rank(s) + 1):
            V = pod_basis(S, r).vectors
            lhs = np.linalg.norm(S - V @ (V.T @ S)) ** 2
            rhs = float(np.sum(s[r:] ** 2))
            worst = max(worst, abs(lhs - rhs) / np.linalg.norm(S) ** 2)
            cases += 1
    acceptance(9, worst <= 1e-8, f"{cases} (matrix, r) cases, worst relative gap {worst:.1e}")


def test_criterion_10_derivative_order(acceptance):
    def err(dt):
        t = np.arange(0.0, 2.0 + dt / 2, dt)
        return np.max(np.abs(estimate_derivatives(np.sin(t), dt) - np.cos(t)))

    ratio = err(1e-2) / err(5e-3)
    acceptance(10, ratio >= 14, f"error ratio {ratio:.2f} when halving dt from 1e-2 (>= 14)")


@pytest.mark.parametrize("name", sorted(REGRESSION))
def test_regression_values_are_reproducible(name, tmp_path):
    summary = run_experiment(ExperimentConfig(out=str(tmp_path), methods=(name,)), write=False)
    assert summary.get(name, 3).error == pytest.approx(REGRESSION[name], rel=1e-6)
