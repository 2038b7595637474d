"""Operator inference for the reduced velocity ODE and the pressure map.

The reduced velocity ``x`` is fit to

    x' ≈ A x + H q(x) + B u [+ c] [+ K u_perp']

and the reduced pressure to the algebraic map

    p ≈ Ap x + Hp q(x) + Bp u

by minimum-norm least squares against a truncated SVD of the stacked
regressors. ``q(x)`` are the compact quadratic monomials.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import min_norm_lstsq, quadratic_features, truncated_svd
from .model import ReducedQuadModel

__all__ = [
    "BLOCK_ORDER",
    "QUADRATIC",
    "LINEAR",
    "RegressorMatrix",
    "PressureMap",
    "LCurvePoint",
    "assemble_regressors",
    "infer_velocity_model",
    "infer_pressure_map",
    "l_curve_scan",
    "pick_tolerance",
]

BLOCK_ORDER = ("state", "quadratic", "input", "constant", "input_derivative")
QUADRATIC = ("state", "quadratic", "input")
LINEAR = ("state", "input")


@dataclass(frozen=True)
class RegressorMatrix:
    """Stacked regressor blocks, one sample per column."""

    labels: tuple
    sizes: tuple
    matrix: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def split(self, operator):
        """Cut a ``(q, k)`` operator into per-block column groups."""
        operator = np.asarray(operator)
        if operator.shape[1] != sum(self.sizes):
            raise ValueError("operator width does not match the regressors")
        out, start = {}, 0
        for label, size in zip(self.labels, self.sizes):
            out[label] = operator[:, start:start + size]
            start += size
        return out


def _normalize_structure(structure):
    if isinstance(structure, str):
        structure = (structure,)
    labels = tuple(structure)
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate regressor blocks in {labels}")
    unknown = set(labels) - set(BLOCK_ORDER)
    if unknown:
        raise ValueError(f"unknown regressor blocks {sorted(unknown)}")
    if "state" not in labels:
        raise ValueError("the state block is required")
    return tuple(b for b in BLOCK_ORDER if b in labels)


def assemble_regressors(Xhat, U=None, Udot_perp=None, structure=QUADRATIC):
    """Stack the requested regressor blocks in canonical order.

    Parameters
    ----------
    Xhat : (r, K) reduced states
    U : (m, K) inputs, required for the ``input`` block
    Udot_perp : (1, K) constraint-input derivative, required for
        ``input_derivative``
    structure : iterable of block labels from :data:`BLOCK_ORDER`
    """
    Xhat = np.asarray(Xhat, dtype=float)
    if Xhat.ndim == 1:
        Xhat = Xhat[None, :]
    K = Xhat.shape[1]
    labels = _normalize_structure(structure)
    blocks = []
    for label in labels:
        if label == "state":
            blk = Xhat
        elif label == "quadratic":
            blk = quadratic_features(Xhat)
        elif label == "input":
            if U is None:
                raise ValueError("input block requested but U is missing")
            blk = np.asarray(U, dtype=float).reshape(-1, K)
        elif label == "constant":
            blk = np.ones((1, K))
        else:
            if Udot_perp is None:
                raise ValueError("input_derivative block requested but no data given")
            blk = np.asarray(Udot_perp, dtype=float).reshape(-1, K)
        blocks.append(blk)
    mat = np.vstack(blocks)
    return RegressorMatrix(labels, tuple(b.shape[0] for b in blocks), mat)


def infer_velocity_model(Xhat, Xdot, U=None, structure=QUADRATIC, tol=0.0,
                         Udot_perp=None):
    """Fit a :class:`ReducedQuadModel` to reduced states and derivatives.

    Parameters
    ----------
    Xhat : (r, K) reduced states
    Xdot : (r, K) their time derivatives
    U : (m, K) inputs, optional
    structure : regressor blocks, e.g. :data:`QUADRATIC` or :data:`LINEAR`
    tol : float
        Absolute singular-value cut for the regressor matrix.
    Udot_perp : (1, K), optional
        Derivative of the constraint input, for the ``input_derivative`` block.
    """
    D = assemble_regressors(Xhat, U, Udot_perp, structure)
    Xdot = np.asarray(Xdot, dtype=float)
    if Xdot.ndim == 1:
        Xdot = Xdot[None, :]
    r = D.sizes[0]
    if Xdot.shape != (r, D.shape[1]):
        raise ValueError(f"derivatives have shape {Xdot.shape}, expected {(r, D.shape[1])}")
    ops = D.split(min_norm_lstsq(D.matrix, Xdot, tol))
    return ReducedQuadModel(
        A=ops["state"],
        H=ops.get("quadratic"),
        B=ops.get("input"),
        c=ops.get("constant"),
        K=ops.get("input_derivative"),
    )


@dataclass(frozen=True)
class PressureMap:
    """Algebraic reduced pressure ``p = Ap x + Hp q(x) + Bp u [+ cp]``."""

    Ap: np.ndarray
    Hp: np.ndarray = None
    Bp: np.ndarray = None
    cp: np.ndarray = None

    def __call__(self, X, U=None):
        X = np.asarray(X, dtype=float)
        vec = X.ndim == 1
        if vec:
            X = X[:, None]
        P = self.Ap @ X
        if self.Hp is not None:
            P = P + self.Hp @ quadratic_features(X)
        if self.Bp is not None and U is not None:
            P = P + self.Bp @ np.asarray(U, dtype=float).reshape(self.Bp.shape[1], -1)
        if self.cp is not None:
            P = P + self.cp
        return P[:, 0] if vec else P


def infer_pressure_map(Phat, Xhat, U=None, structure=QUADRATIC, tol=0.0):
    """Fit the reduced pressure as an algebraic function of the reduced velocity.

    The right-hand side is ``Phat`` itself; no derivative is involved.
    """
    D = assemble_regressors(Xhat, U, None, structure)
    Phat = np.asarray(Phat, dtype=float)
    if Phat.ndim == 1:
        Phat = Phat[None, :]
    if Phat.shape[1] != D.shape[1]:
        raise ValueError("pressure and velocity data have different column counts")
    ops = D.split(min_norm_lstsq(D.matrix, Phat, tol))
    return PressureMap(Ap=ops["state"], Hp=ops.get("quadratic"),
                       Bp=ops.get("input"), cp=ops.get("constant"))


@dataclass(frozen=True)
class LCurvePoint:
    tol: float
    residual_norm: float
    solution_norm: float
    rank: int


def l_curve_scan(D, RHS, tols):
    """Residual and solution norms of the truncated solve for each tolerance.

    One SVD is shared by all tolerances. Points whose truncation keeps no
    direction are recorded with the full ``||RHS||_F`` residual and a zero
    solution.
    """
    tols = [float(t) for t in tols]
    if any(t <= 0 for t in tols):
        raise ValueError("tolerances must be positive")
    if any(b < a for a, b in zip(tols, tols[1:])):
        raise ValueError("tolerances must be sorted ascending")
    Dm = D.matrix if isinstance(D, RegressorMatrix) else np.asarray(D, dtype=float)
    RHS = np.asarray(RHS, dtype=float)
    if RHS.ndim == 1:
        RHS = RHS[None, :]
    full = truncated_svd(Dm, 0.0)
    s = full.singular_values
    # RHS = C V^T + R_perp with C the coefficients in the right singular directions
    C = RHS @ full.right_vectors
    perp2 = float(np.sum((RHS - C @ full.right_vectors.T) ** 2))
    c2 = np.sum(C ** 2, axis=0)
    # cumulative sums keep both norms exactly monotone in the retained rank
    tail = np.concatenate([np.cumsum(c2[::-1])[::-1], [0.0]])
    head = np.concatenate([[0.0], np.cumsum(c2 / s ** 2)])
    points = []
    for tol in tols:
        k = int(np.count_nonzero(s > tol))
        points.append(LCurvePoint(tol, float(np.sqrt(perp2 + tail[k])),
                                  float(np.sqrt(head[k])), k))
    return points


def _menger_curvature(a, b, c):
    ab = np.linalg.norm(b - a)
    bc = np.linalg.norm(c - b)
    ca = np.linalg.norm(a - c)
    denom = ab * bc * ca
    if denom == 0:
        return 0.0
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return abs(2.0 * cross / denom)


def pick_tolerance(points, floor=1e-300):
    """Tolerance at the corner of the L-curve.

    Consecutive points with the same residual and solution norm are merged
    into one vertex carrying the largest tolerance of the run. The chosen
    vertex has the largest Menger curvature of the log-log polyline;
    ties, and polylines without any bend, resolve to the larger tolerance.
    """
    points = sorted(points, key=lambda p: p.tol)
    if len(points) < 3:
        raise ValueError("need at least 3 L-curve points")
    verts = []
    for p in points:
        xy = np.log10([max(p.residual_norm, floor), max(p.solution_norm, floor)])
        if verts and np.array_equal(verts[-1][1], xy):
            verts[-1] = (p.tol, xy)
        else:
            verts.append((p.tol, xy))
    if len(verts) < 3:
        return points[-1].tol
    best_tol, best_kappa = points[-1].tol, 0.0
    for i in range(1, len(verts) - 1):
        kappa = _menger_curvature(verts[i - 1][1], verts[i][1], verts[i + 1][1])
        if kappa > 1e-12 and kappa >= best_kappa:
            best_tol, best_kappa = verts[i][0], kappa
    return best_tol
