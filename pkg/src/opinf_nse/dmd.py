"""Discrete-time regression baselines: DMD, DMD with control, quadratic DMD.

All three fit a one-step map ``x_{k+1} = A x_k [+ H q(x_k)] [+ B u_k]`` by
the same truncated-SVD least squares used for operator inference.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import min_norm_lstsq, num_quadratic, quadratic_features
from .simulate import SimulationError

__all__ = ["DEFAULT_RTOL", "DiscreteModel", "dmd", "dmdc", "dmdquad", "rollout"]

DEFAULT_RTOL = 1e-10


@dataclass(frozen=True)
class DiscreteModel:
    A: np.ndarray
    B: np.ndarray = None
    H: np.ndarray = None

    def __post_init__(self):
        r = self.A.shape[0]
        if self.A.shape != (r, r):
            raise ValueError("A must be square")
        if self.B is not None and self.B.shape[0] != r:
            raise ValueError("B row count differs from A")
        if self.H is not None and self.H.shape != (r, num_quadratic(r)):
            raise ValueError(f"H must have shape {(r, num_quadratic(r))}")

    @property
    def r(self):
        return self.A.shape[0]

    def step(self, x, u=None):
        y = self.A @ x
        if self.H is not None:
            y = y + self.H @ quadratic_features(x[:, None])[:, 0]
        if self.B is not None and u is not None:
            y = y + self.B @ np.atleast_1d(u)
        return y


def _pairs(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] < 2:
        raise ValueError("need at least two snapshots")
    return X, X[:, :-1], X[:, 1:]


def _inputs(U, K):
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[None, :]
    if U.shape[1] != K:
        raise ValueError(f"inputs have {U.shape[1]} columns, states have {K}")
    return U[:, :-1]


def _fit(D, Y, tol, rtol):
    if not np.any(D):
        # no excitation at all: the minimum-norm map is zero
        return np.zeros((Y.shape[0], D.shape[0]))
    if tol is None:
        return min_norm_lstsq(D, Y, 0.0, rtol=rtol)
    return min_norm_lstsq(D, Y, tol)


def dmd(X, tol=None, rtol=DEFAULT_RTOL):
    """Linear map from consecutive snapshot pairs.

    ``tol`` is an absolute singular-value cut; when omitted the cut is
    ``rtol * sigma_1``.
    """
    X, X0, X1 = _pairs(X)
    return DiscreteModel(A=_fit(X0, X1, tol, rtol))


def dmdc(X, U, tol=None, rtol=DEFAULT_RTOL):
    """``[A B]`` from ``[x_k; u_k] -> x_{k+1}``."""
    X, X0, X1 = _pairs(X)
    U0 = _inputs(U, X.shape[1])
    r = X.shape[0]
    G = _fit(np.vstack([X0, U0]), X1, tol, rtol)
    return DiscreteModel(A=G[:, :r], B=G[:, r:])


def dmdquad(X, U=None, tol=None, rtol=DEFAULT_RTOL):
    """``[A H B]`` from ``[x_k; q(x_k); u_k] -> x_{k+1}``."""
    X, X0, X1 = _pairs(X)
    r = X.shape[0]
    blocks = [X0, quadratic_features(X0)]
    if U is not None:
        blocks.append(_inputs(U, X.shape[1]))
    s = num_quadratic(r)
    G = _fit(np.vstack(blocks), X1, tol, rtol)
    return DiscreteModel(A=G[:, :r], H=G[:, r:r + s],
                         B=G[:, r + s:] if U is not None else None)


def rollout(model, x0, U=None, steps=None):
    """Iterate the discrete map from ``x0``.

    With inputs ``U`` of ``K`` columns, ``K - 1`` steps are taken using
    ``u_0 .. u_{K-2}`` unless ``steps`` is given.

    Returns
    -------
    (r, steps+1) ndarray
    """
    if U is not None:
        U = np.asarray(U, dtype=float)
        if U.ndim == 1:
            U = U[None, :]
        if steps is None:
            steps = U.shape[1] - 1
        if U.shape[1] < steps:
            raise ValueError("not enough input samples for the requested steps")
    if steps is None:
        raise ValueError("steps is required when no inputs are given")
    x = np.asarray(x0, dtype=float).ravel()
    if x.size != model.r:
        raise ValueError("initial state does not match the model")
    out = np.empty((model.r, steps + 1))
    out[:, 0] = x
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            x = model.step(x, None if U is None else U[:, k])
        if not np.all(np.isfinite(x)):
            raise SimulationError(k + 1)
        out[:, k + 1] = x
    return out
