"""POD bases and intrusive Galerkin reduction."""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .linalg import compress_quadratic_operator, spd_factor, truncated_svd
from .model import ReducedQuadModel, validate
from .transform import build_leray, corrected_operators

__all__ = [
    "RANK_RTOL",
    "PodBasis",
    "ReducedDae",
    "pod_basis",
    "numerical_rank",
    "constraint_residual",
    "mode_constraint_residuals",
    "project_snapshots",
    "galerkin_reduce",
    "divfree_correct",
    "corrected_galerkin_reduce",
]

RANK_RTOL = 1e-13


@dataclass(frozen=True)
class PodBasis:
    """Reduction basis with the singular values it was cut from.

    ``weight`` is the lower Cholesky factor of the mass matrix for an
    ``E11``-orthonormal basis and ``None`` for a Euclidean one.
    """

    vectors: np.ndarray
    singular_values: np.ndarray
    weight: np.ndarray = None

    @property
    def r(self):
        return self.vectors.shape[1]

    @property
    def n(self):
        return self.vectors.shape[0]

    def gram(self):
        V = self.vectors
        if self.weight is None:
            return V.T @ V
        W = self.weight.T @ V
        return W.T @ W

    def truncate(self, r):
        if not 1 <= r <= self.r:
            raise ValueError(f"cannot truncate a rank-{self.r} basis to {r}")
        return PodBasis(self.vectors[:, :r], self.singular_values, self.weight)


def _vectors(basis):
    return basis.vectors if isinstance(basis, PodBasis) else np.asarray(basis, dtype=float)


def numerical_rank(singular_values, rtol=RANK_RTOL):
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def pod_basis(snapshots, r, weight=None):
    """Dominant ``r`` POD modes of a snapshot matrix.

    Parameters
    ----------
    snapshots : (n, K) array_like
    r : int
        Number of modes; must not exceed the numerical rank
        (``sigma_i > 1e-13 sigma_1``).
    weight : (n, n) array_like, optional
        SPD mass matrix ``E11``. The basis is then ``L^{-T} U_r`` where
        ``L L^T = E11`` and ``U_r`` are the dominant left singular vectors of
        ``L^T snapshots``, so that ``V^T E11 V = I`` and the projection error
        is minimal in the ``E11`` norm.
    """
    X = np.asarray(snapshots, dtype=float)
    if X.ndim != 2:
        raise ValueError("snapshots must be a matrix")
    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    L = None
    if weight is not None:
        L = spd_factor(weight)
        X = L.T @ X
    svd = truncated_svd(X, 0.0)
    s = svd.all_singular_values
    rank = numerical_rank(s)
    if r > rank:
        raise ValueError(f"requested {r} modes but the snapshots have numerical rank {rank}")
    U = svd.left_vectors[:, :r]
    if L is not None:
        U = sla.solve_triangular(L.T, U, lower=False)
    return PodBasis(vectors=U, singular_values=s, weight=L)


def constraint_residual(A12, basis):
    """``||A12^T V||_F / ||V||_F``."""
    V = _vectors(basis)
    nrm = np.linalg.norm(V)
    if nrm == 0:
        raise ValueError("basis is zero")
    A12 = np.asarray(A12, dtype=float)
    if A12.shape[0] != V.shape[0]:
        raise ValueError("A12 and basis row counts differ")
    return float(np.linalg.norm(A12.T @ V) / nrm)


def mode_constraint_residuals(A12, basis):
    """``||A12^T v_i|| / ||v_i||`` for every basis column."""
    V = _vectors(basis)
    return np.linalg.norm(np.asarray(A12).T @ V, axis=0) / np.linalg.norm(V, axis=0)


def project_snapshots(basis, snapshots):
    """Euclidean coordinates ``V^T X``."""
    V = _vectors(basis)
    X = np.asarray(snapshots, dtype=float)
    if X.shape[0] != V.shape[0]:
        raise ValueError(f"snapshots have {X.shape[0]} rows, basis has {V.shape[0]}")
    return V.T @ X


@dataclass(frozen=True)
class ReducedDae:
    """Galerkin-projected DAE that still couples to the reduced pressure."""

    E: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    H: np.ndarray
    B1: np.ndarray


def _reduced_quadratic(model, V):
    # V^T H (V ⊗ V) in compact layout; H q(V x) is quadratic in x
    r = V.shape[1]
    n = model.n_v
    H3 = model.H.reshape(n, n, n)
    T = np.einsum("iab,ax,by->ixy", H3, V, V, optimize=True).reshape(n, r * r)
    return compress_quadratic_operator(V.T @ T)


def _mass_lu(E):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(E)
    d = np.abs(np.diag(lu[0]))
    if d.size and np.min(d) <= 1e-14 * np.max(d):
        raise np.linalg.LinAlgError("reduced mass matrix is singular")
    return lu


def galerkin_reduce(model, Vv, Vp=None, force_ode=False, atol=1e-10):
    """Block Galerkin projection of the full-order DAE.

    ``E = V^T E11 V``, ``A11 = V^T A11 V``, ``A12 = V^T A12 Vp``,
    ``H = V^T H (V ⊗ V)`` and ``B1 = V^T B1``.

    If ``||V^T A12 Vp|| <= atol`` (or ``force_ode``), the pressure decouples
    and a :class:`ReducedQuadModel` with every operator premultiplied by
    ``E^{-1}`` is returned. Otherwise a :class:`ReducedDae`.
    """
    validate(model)
    V = _vectors(Vv)
    if V.shape[0] != model.n_v:
        raise ValueError("velocity basis does not match the model")
    Pv = np.eye(model.n_p) if Vp is None else _vectors(Vp)
    E = V.T @ model.E11 @ V
    A = V.T @ model.A11 @ V
    A12 = V.T @ model.A12 @ Pv
    H = _reduced_quadratic(model, V)
    B = V.T @ model.B1
    if force_ode or np.linalg.norm(A12) <= atol:
        lu = _mass_lu(E)

        def solve(M):
            return sla.lu_solve(lu, M) if M.size else M

        return ReducedQuadModel(A=solve(A), H=solve(H),
                                B=solve(B) if model.m else None)
    return ReducedDae(E=E, A11=A, A12=A12, H=H, B1=B)


def divfree_correct(basis, projector, rtol=1e-10):
    """Project basis columns with ``Pi`` and re-orthonormalize.

    Directions whose projection is numerically zero (relative to the largest
    projected singular value, or absolutely against the input scale) are
    dropped, so the result may have fewer columns. An E11-weighted basis is
    re-orthonormalized in the E11 inner product.

    Raises
    ------
    ValueError
        If nothing survives the projection.
    """
    if isinstance(basis, PodBasis):
        V, sv, L = basis.vectors, basis.singular_values, basis.weight
    else:
        V, sv, L = np.asarray(basis, dtype=float), np.array([]), None
    W = projector.apply(V)
    scale = max(np.linalg.norm(V, 2), np.finfo(float).tiny)
    Y = W if L is None else L.T @ W
    svd = truncated_svd(Y, 0.0)
    s = svd.all_singular_values
    k = int(np.count_nonzero(s > rtol * scale))
    if k == 0:
        raise ValueError("projected basis has rank zero")
    Q = svd.left_vectors[:, :k]
    if L is not None:
        Q = sla.solve_triangular(L.T, Q, lower=False)
    return PodBasis(vectors=Q, singular_values=sv, weight=L)


def corrected_galerkin_reduce(model, basis, projector=None):
    """Galerkin model of the ``v_top`` equation for inhomogeneous constraints.

    ``basis`` must be divergence-free (``A12^T W = 0``, e.g. from
    :func:`divfree_correct`). The returned model carries the bilinear term
    ``N`` and the ``u_perp`` / ``u_perp**2`` forcing in ``F``; the full
    velocity is recovered as ``W x + S_perp u_perp`` with
    ``S_perp`` from :func:`opinf_nse.transform.corrected_operators`.

    Returns
    -------
    rom : ReducedQuadModel
    S_perp : (n_v,) ndarray
    """
    projector = build_leray(model) if projector is None else projector
    ops = corrected_operators(model, projector)
    W = _vectors(basis)
    lu = _mass_lu(W.T @ model.E11 @ W)

    def solve(M):
        return sla.lu_solve(lu, M)

    rom = ReducedQuadModel(
        A=solve(W.T @ model.A11 @ W),
        H=solve(_reduced_quadratic(model, W)),
        B=solve(W.T @ model.B1) if model.m else None,
        N=solve(W.T @ ops.N @ W),
        F=solve(W.T @ np.column_stack([ops.a_perp, ops.c2])),
    )
    return rom, ops.S_perp
