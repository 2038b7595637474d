"""Fixed-step time integration and derivative estimation."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .model import SnapshotSet
from .transform import build_leray, pressure_from_velocity

__all__ = [
    "SimulationError",
    "TimeGrid",
    "imex_euler_dae",
    "integrate_ode",
    "imex_euler_ode",
    "stokes_steady",
    "estimate_derivatives",
]

log = logging.getLogger(__name__)


class SimulationError(ArithmeticError):
    """Integration produced a non-finite state."""

    def __init__(self, step, msg="non-finite state"):
        super().__init__(f"{msg} at step {step}")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"need at least one step, got N={self.N}")
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got [{self.t0}, {self.T}]")

    @property
    def dt(self):
        return (self.T - self.t0) / self.N

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.N + 1)


def _sample(signal, t, size):
    if signal is None:
        return np.zeros(size)
    val = signal(t) if callable(signal) else signal
    return np.atleast_1d(np.asarray(val, dtype=float)).reshape(size)


def imex_euler_dae(model, v0, u, grid, uperp=None, udot_perp=None):
    """Semi-implicit Euler for the quadratic DAE.

    Each step solves

        [E11 - dt A11   -dt A12] [v_{k+1}]   [E11 v_k + dt (H(v_k ⊗ v_k) + B1 u_{k+1})]
        [A12^T             0   ] [p_{k+1}] = [-Bperp u_perp(t_{k+1})                  ]

    with one LU factorization reused for all steps.

    Parameters
    ----------
    model : QuadDaeModel
    v0 : (n_v,) initial velocity
    u : callable ``t -> (m,)`` or constant, or None
    grid : TimeGrid
    uperp : callable ``t -> float`` or constant, or None
    udot_perp : callable, optional
        Only used for the consistent initial pressure ``P[:, 0]``.

    Returns
    -------
    SnapshotSet
    """
    nv, npr, m = model.n_v, model.n_p, model.m
    dt = grid.dt
    times = grid.times
    v = np.array(v0, dtype=float).reshape(nv)

    U = np.column_stack([_sample(u, t, m) for t in times]) if m else np.zeros((0, times.size))
    Up = None
    if uperp is not None:
        Up = np.array([[float(_sample(uperp, t, 1)[0]) for t in times]])

    if not np.all(np.isfinite(v)):
        raise SimulationError(0)
    res = model.A12.T @ v
    if Up is not None and model.Bperp is not None:
        res = res + model.Bperp[:, 0] * Up[0, 0]
    if npr and np.linalg.norm(res) > 1e-8:
        log.warning("initial velocity violates the constraint (residual %.3e)",
                    np.linalg.norm(res))

    K = np.block([[model.E11 - dt * model.A11, -dt * model.A12],
                  [model.A12.T, np.zeros((npr, npr))]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(K, check_finite=True)
    if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * np.max(np.abs(np.diag(lu[0]))):
        raise np.linalg.LinAlgError("saddle-point matrix is singular")

    V = np.empty((nv, times.size))
    P = np.empty((npr, times.size))
    V[:, 0] = v
    proj = build_leray(model)
    ud0 = None if udot_perp is None else float(_sample(udot_perp, times[0], 1)[0])
    with np.errstate(over="ignore", invalid="ignore"):
        q = model.quad(v)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(q))):
        raise SimulationError(0)
    P[:, 0] = pressure_from_velocity(model, v, U[:, 0] if m else None, ud0, proj=proj)
    rhs = np.empty(nv + npr)
    for k in range(grid.N):
        with np.errstate(over="ignore", invalid="ignore"):
            rhs[:nv] = model.E11 @ v + dt * (model.quad(v) + model.B1 @ U[:, k + 1])
        if npr:
            if Up is not None and model.Bperp is not None:
                rhs[nv:] = -model.Bperp[:, 0] * Up[0, k + 1]
            else:
                rhs[nv:] = 0.0
        if not np.all(np.isfinite(rhs)):
            raise SimulationError(k + 1)
        sol = sla.lu_solve(lu, rhs, check_finite=False)
        if not np.all(np.isfinite(sol)):
            raise SimulationError(k + 1)
        v = sol[:nv]
        V[:, k + 1] = v
        P[:, k + 1] = sol[nv:]
    return SnapshotSet(times=times, V=V, P=P, U=U if m else None, Uperp=Up)


def integrate_ode(rhs, x0, grid):
    """Classical fourth-order Runge-Kutta with a fixed step.

    Parameters
    ----------
    rhs : callable ``(x, t) -> x'``
    x0 : (r,) initial state
    grid : TimeGrid

    Returns
    -------
    (r, N+1) ndarray
    """
    h = grid.dt
    times = grid.times
    x = np.array(x0, dtype=float).ravel()
    X = np.empty((x.size, times.size))
    X[:, 0] = x
    for k in range(grid.N):
        t = times[k]
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = rhs(x, t)
            k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = rhs(x + h * k3, t + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationError(k + 1)
        X[:, k + 1] = x
    return X


def imex_euler_ode(A, rhs, x0, grid):
    """Semi-implicit Euler for ``x' = rhs(x, t)`` with stiff linear part ``A``.

    ``x_{k+1} = (I - dt A)^{-1} (x_k + dt (rhs(x_k, t_{k+1}) - A x_k))``,
    so the linear term is implicit and everything else explicit with inputs
    sampled at ``t_{k+1}``. Applied to a Galerkin model on the full
    divergence-free subspace this reproduces :func:`imex_euler_dae` exactly.
    """
    A = np.asarray(A, dtype=float)
    h = grid.dt
    times = grid.times
    x = np.array(x0, dtype=float).ravel()
    lu = sla.lu_factor(np.eye(x.size) - h * A)
    X = np.empty((x.size, times.size))
    X[:, 0] = x
    for k in range(grid.N):
        t = times[k + 1]
        with np.errstate(over="ignore", invalid="ignore"):
            y = x + h * (rhs(x, t) - A @ x)
        if not np.all(np.isfinite(y)):
            raise SimulationError(k + 1)
        x = sla.lu_solve(lu, y, check_finite=False)
        if not np.all(np.isfinite(x)):
            raise SimulationError(k + 1)
        X[:, k + 1] = x
    return X


def stokes_steady(model, u0=None, uperp0=0.0):
    """Steady Stokes state: the DAE at rest with the quadratic term dropped.

    Solves ``A11 v + A12 p + B1 u0 = 0`` and ``A12^T v + Bperp u_perp0 = 0``.
    """
    nv, npr = model.n_v, model.n_p
    K = np.block([[model.A11, model.A12],
                  [model.A12.T, np.zeros((npr, npr))]])
    rhs = np.zeros(nv + npr)
    if u0 is not None and model.m:
        rhs[:nv] = -model.B1 @ np.atleast_1d(np.asarray(u0, dtype=float))
    if model.Bperp is not None and npr:
        rhs[nv:] = -model.Bperp[:, 0] * float(uperp0)
    lu, piv = sla.lu_factor(K)
    if np.min(np.abs(np.diag(lu))) <= 1e-14 * np.max(np.abs(np.diag(lu))):
        raise np.linalg.LinAlgError("Stokes saddle-point matrix is singular")
    sol = sla.lu_solve((lu, piv), rhs)
    return sol[:nv], sol[nv:]


# fourth-order stencils, in units of 1/(12 dt)
_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
_FIRST = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_SECOND = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])


def estimate_derivatives(X, dt):
    """Fourth-order finite-difference time derivative of each row of ``X``.

    Five-point central differences in the interior and one-sided
    five-point stencils at the first and last two samples. Exact for
    polynomials up to degree four.

    Parameters
    ----------
    X : (r, N+1) array_like, samples on a uniform grid
    dt : float

    Returns
    -------
    (r, N+1) ndarray
    """
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[None, :]
    n = X.shape[1]
    if n < 5:
        raise ValueError(f"need at least 5 samples, got {n}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    D = np.empty_like(X)
    D[:, 2:-2] = (X[:, :-4] * _CENTRAL[0] + X[:, 1:-3] * _CENTRAL[1]
                  + X[:, 3:-1] * _CENTRAL[3] + X[:, 4:] * _CENTRAL[4])
    D[:, 0] = X[:, :5] @ _FIRST
    D[:, 1] = X[:, :5] @ _SECOND
    D[:, -1] = -(X[:, :-6:-1] @ _FIRST)
    D[:, -2] = -(X[:, :-6:-1] @ _SECOND)
    D /= 12.0 * dt
    return D[0] if squeeze else D
