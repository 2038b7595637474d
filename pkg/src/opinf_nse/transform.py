"""Elimination of the pressure from the quadratic DAE.

With ``S = A12^T E11^{-1} A12`` the discrete Leray projector is

    Pi   = I - E11^{-1} A12 S^{-1} A12^T
    Pi^T = I - A12 S^{-1} A12^T E11^{-1}

and the velocity obeys the ODE

    E11 v' = Pi^T (A11 v + H(v ⊗ v) + B1 u) - A12 S^{-1} Bperp u_perp'

while the pressure is an algebraic function of ``v``, ``u`` and ``u_perp'``.
Nothing here forms ``Pi`` densely; every application goes through the
Cholesky factors of ``E11`` and ``S``.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import spd_factor, spd_solve, truncated_svd
from .model import ModelError, validate

__all__ = [
    "LerayProjector",
    "build_leray",
    "apply_leray",
    "apply_leray_t",
    "pressure_from_velocity",
    "ode_rhs",
    "decompose_velocity",
    "CorrectedOperators",
    "corrected_operators",
    "EmpiricalProjector",
    "empirical_divfree_projector",
]


@dataclass(frozen=True)
class LerayProjector:
    """Factored discrete Leray projector of one model."""

    L_E: np.ndarray
    A12: np.ndarray
    L_S: np.ndarray

    @property
    def n_v(self):
        return self.A12.shape[0]

    @property
    def n_p(self):
        return self.A12.shape[1]

    def solve_mass(self, x):
        return spd_solve(self.L_E, x)

    def solve_schur(self, y):
        if self.n_p == 0:
            return np.zeros_like(y)
        return spd_solve(self.L_S, y)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n_v:
            raise ValueError(f"expected leading dimension {self.n_v}, got {x.shape[0]}")
        return x

    def apply(self, x):
        """``Pi x`` for a vector or each column of a matrix."""
        x = self._check(x)
        if self.n_p == 0:
            return x.copy()
        return x - self.solve_mass(self.A12 @ self.solve_schur(self.A12.T @ x))

    def apply_t(self, x):
        """``Pi^T x`` for a vector or each column of a matrix."""
        x = self._check(x)
        if self.n_p == 0:
            return x.copy()
        return x - self.A12 @ self.solve_schur(self.A12.T @ self.solve_mass(x))

    def dense(self):
        return self.apply(np.eye(self.n_v))


def build_leray(model):
    """Factor ``E11`` and ``S`` of ``model`` into a :class:`LerayProjector`."""
    validate(model)
    L_E = spd_factor(model.E11)
    if model.n_p == 0:
        L_S = np.zeros((0, 0))
    else:
        S = model.A12.T @ spd_solve(L_E, model.A12)
        try:
            L_S = spd_factor(0.5 * (S + S.T))
        except np.linalg.LinAlgError:
            raise ModelError("S = A12^T E11^{-1} A12 is singular") from None
    return LerayProjector(L_E=L_E, A12=model.A12, L_S=L_S)


def apply_leray(proj, x):
    return proj.apply(x)


def apply_leray_t(proj, x):
    return proj.apply_t(x)


def _forcing(model, v, u):
    f = model.A11 @ v + model.quad(v)
    if u is not None and model.m > 0:
        u = np.asarray(u, dtype=float)
        if v.ndim == 1:
            u = np.atleast_1d(u)
        elif u.ndim == 1:
            u = u.reshape(model.m, -1)
        f = f + model.B1 @ u
    return f


def _constraint_rate(model, udot_perp, like):
    # Bperp * u_perp', shaped like the pressure
    if udot_perp is None or model.Bperp is None:
        return None
    ud = np.asarray(udot_perp, dtype=float)
    if like.ndim == 1:
        return model.Bperp[:, 0] * float(ud)
    return model.Bperp[:, :1] * ud.reshape(1, -1)


def pressure_from_velocity(model, v, u=None, udot_perp=None, proj=None):
    """Pressure consistent with the velocity through the constraint.

    ``p = -S^{-1} A12^T E11^{-1} (A11 v + H(v⊗v) + B1 u) - S^{-1} Bperp u_perp'``

    ``v`` may be a vector or a matrix of column states (with matching ``u``
    columns and ``udot_perp`` entries).
    """
    proj = build_leray(model) if proj is None else proj
    v = np.asarray(v, dtype=float)
    f = _forcing(model, v, u)
    rhs = model.A12.T @ proj.solve_mass(f)
    g = _constraint_rate(model, udot_perp, rhs)
    if g is not None:
        rhs = rhs + g
    return -proj.solve_schur(rhs)


def ode_rhs(model, v, u=None, udot_perp=None, proj=None):
    """Velocity derivative of the pressure-free ODE.

    ``E11 v' = Pi^T (A11 v + H(v⊗v) + B1 u) - A12 S^{-1} Bperp u_perp'``
    """
    proj = build_leray(model) if proj is None else proj
    v = np.asarray(v, dtype=float)
    rhs = proj.apply_t(_forcing(model, v, u))
    g = _constraint_rate(model, udot_perp, model.A12.T @ v)
    if g is not None and model.n_p > 0:
        rhs = rhs - model.A12 @ proj.solve_schur(g)
    return proj.solve_mass(rhs)


def _sperp(model, proj):
    if model.Bperp is None:
        return np.zeros(model.n_v)
    return -proj.solve_mass(model.A12 @ proj.solve_schur(model.Bperp[:, 0]))


def decompose_velocity(model, v, uperp=0.0, proj=None):
    """Split ``v`` into ``v_top = Pi v`` and ``v_perp = S_perp u_perp``.

    ``S_perp = -E11^{-1} A12 S^{-1} Bperp``. The parts add up to ``v`` when
    ``v`` satisfies ``A12^T v + Bperp u_perp = 0``. Matrices of column
    states take a row of ``u_perp`` values.
    """
    proj = build_leray(model) if proj is None else proj
    v = np.asarray(v, dtype=float)
    s = _sperp(model, proj)
    v_top = proj.apply(v)
    if v.ndim == 1:
        v_perp = s * float(uperp)
    else:
        v_perp = np.outer(s, np.broadcast_to(np.ravel(uperp), (v.shape[1],)))
    return v_top, v_perp


@dataclass(frozen=True)
class CorrectedOperators:
    """Operators of the ``v_top`` equation for ``v = v_top + S_perp u_perp``.

    ``E11 v_top' = A11 v_top + H(v_top ⊗ v_top) + N v_top u_perp
    + c2 u_perp**2 + a_perp u_perp + A12 p + B1 u - E11 S_perp u_perp'``.

    ``A11`` and ``H`` are those of the original model; ``a_perp = A11 S_perp``
    is the linear-in-``u_perp`` forcing the quadratic expansion leaves behind.
    """

    A11: np.ndarray
    Hc: np.ndarray
    N: np.ndarray
    c2: np.ndarray
    a_perp: np.ndarray
    S_perp: np.ndarray


def corrected_operators(model, proj=None):
    """Expand ``H((v+s u)⊗(v+s u))`` into ``H(v⊗v) + N v u + c2 u**2``.

    ``N = H(I ⊗ s + s ⊗ I)`` and ``c2 = H(s ⊗ s)`` with ``s = S_perp``.
    """
    if model.Bperp is None:
        raise ValueError("model has no constraint inhomogeneity (Bperp is None)")
    proj = build_leray(model) if proj is None else proj
    s = _sperp(model, proj)
    n = model.n_v
    H3 = model.H.reshape(n, n, n)
    N = H3 @ s + np.einsum("iab,a->ib", H3, s)
    c2 = model.quad(s)
    return CorrectedOperators(A11=model.A11, Hc=model.Hc, N=N, c2=c2,
                              a_perp=model.A11 @ s, S_perp=s)


@dataclass(frozen=True)
class EmpiricalProjector:
    """``I - Q Q^T`` for an orthonormal ``Q`` spanning pressure-gradient data."""

    Q: np.ndarray

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return x - self.Q @ (self.Q.T @ x)

    def dense(self):
        n = self.Q.shape[0]
        return np.eye(n) - self.Q @ self.Q.T


def empirical_divfree_projector(snapshots, rtol=1e-13):
    """Projector annihilating the span of pressure-gradient snapshots.

    Parameters
    ----------
    snapshots : (n_v, K) array_like
        Columns ``A12 p(t_k)``.
    rtol : float
        Singular values at or below ``rtol * sigma_1`` are treated as zero.
    """
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.ndim == 1:
        snapshots = snapshots[:, None]
    if not np.all(np.isfinite(snapshots)):
        raise ValueError("snapshots contain non-finite entries")
    n = snapshots.shape[0]
    if not np.any(snapshots):
        return EmpiricalProjector(np.zeros((n, 0)))
    svd = truncated_svd(snapshots, 0.0)
    s = svd.all_singular_values
    k = int(np.count_nonzero(s > rtol * s[0]))
    return EmpiricalProjector(svd.left_vectors[:, :k].copy())
