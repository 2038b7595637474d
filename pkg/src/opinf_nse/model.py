"""Full-order and reduced-order model containers.

The full-order model is the quadratic index-2 DAE

    E11 v' = A11 v + A12 p + H (v ⊗ v) + B1 u
         0 = A12^T v + Bperp u_perp

with scalar ``u_perp``. Quadratic operators are stored compactly (see
:mod:`opinf_nse.linalg`); the full ``H`` is available as a property.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import (compress_quadratic_operator, expand_quadratic_operator,
                     num_quadratic, quadratic_features, spd_factor, spd_solve)

__all__ = [
    "ModelError",
    "QuadDaeModel",
    "ReducedQuadModel",
    "SnapshotSet",
    "ValidationReport",
    "validate",
    "dae_rhs",
    "SplitMix64",
    "random_demo",
]


class ModelError(ValueError):
    """A model violates a structural assumption (SPD mass, nonsingular S, ...)."""


def _mat(a, shape=None, name="matrix"):
    a = np.array(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if shape is not None and a.shape != shape:
        raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuadDaeModel:
    """Full-order quadratic DAE realization.

    Parameters
    ----------
    E11 : (nv, nv) mass matrix, symmetric positive definite.
    A11 : (nv, nv) linear operator.
    A12 : (nv, np) discrete gradient; ``np`` may be zero.
    H : (nv, nv**2) quadratic operator in the ``H (v ⊗ v)`` layout, or
        (nv, nv(nv+1)/2) when ``compact=True``.
    B1 : (nv, m) input map.
    Bperp : (np, 1) map of the scalar constraint input, or None.
    Cv, Cp : optional output maps for velocity and pressure.
    """

    E11: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    Hc: np.ndarray
    B1: np.ndarray
    Bperp: np.ndarray = None
    Cv: np.ndarray = None
    Cp: np.ndarray = None

    def __init__(self, E11, A11, A12, H, B1, Bperp=None, Cv=None, Cp=None,
                 compact=False):
        E11 = _mat(E11, name="E11")
        nv = E11.shape[0]
        A11 = _mat(A11, (nv, nv), "A11")
        A12 = np.array(A12, dtype=float)
        if A12.size == 0:
            A12 = np.zeros((nv, 0))
        A12 = _mat(A12, name="A12")
        if A12.shape[0] != nv:
            raise ValueError(f"A12 has {A12.shape[0]} rows, expected {nv}")
        npr = A12.shape[1]
        if not nv > npr:
            raise ValueError(f"need n_v > n_p, got {nv} <= {npr}")
        Hc = _mat(H, name="H")
        if not compact:
            if Hc.shape != (nv, nv * nv):
                raise ValueError(f"H has shape {Hc.shape}, expected {(nv, nv * nv)}")
            Hc = compress_quadratic_operator(Hc)
            Hc.setflags(write=False)
        elif Hc.shape != (nv, num_quadratic(nv)):
            raise ValueError(f"compact H has shape {Hc.shape}")
        B1 = _mat(B1, name="B1")
        if B1.shape[0] != nv:
            raise ValueError(f"B1 has {B1.shape[0]} rows, expected {nv}")
        if Bperp is not None:
            Bperp = _mat(Bperp, (npr, 1), "Bperp")
        if Cv is not None:
            Cv = _mat(Cv, name="Cv")
            if Cv.shape[1] != nv:
                raise ValueError("Cv column count must equal n_v")
        if Cp is not None:
            Cp = _mat(Cp, name="Cp")
            if Cp.shape[1] != npr:
                raise ValueError("Cp column count must equal n_p")
        for name, val in [("E11", E11), ("A11", A11), ("A12", A12), ("Hc", Hc),
                          ("B1", B1), ("Bperp", Bperp), ("Cv", Cv), ("Cp", Cp)]:
            object.__setattr__(self, name, val)

    @property
    def n_v(self):
        return self.E11.shape[0]

    @property
    def n_p(self):
        return self.A12.shape[1]

    @property
    def m(self):
        return self.B1.shape[1]

    @property
    def H(self):
        """Quadratic operator in the full ``(nv, nv**2)`` layout."""
        return expand_quadratic_operator(self.Hc)

    @property
    def homogeneous(self):
        return self.Bperp is None or not np.any(self.Bperp)

    def quad(self, v):
        """Evaluate ``H (v ⊗ v)`` for a vector or column-wise for a matrix."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return self.Hc @ quadratic_features(v[:, None])[:, 0]
        return self.Hc @ quadratic_features(v)


@dataclass(frozen=True)
class ValidationReport:
    e11_spd: bool
    a12_rank: int
    s_condition: float
    notes: tuple = ()

    @property
    def valid(self):
        return self.e11_spd and np.isfinite(self.s_condition)


def validate(model):
    """Check the structural assumptions of a :class:`QuadDaeModel`.

    ``E11`` must be SPD and ``S = A12^T E11^{-1} A12`` must admit a Cholesky
    factorization.

    Returns
    -------
    ValidationReport

    Raises
    ------
    ModelError
        If ``E11`` is not SPD or ``S`` is singular.
    """
    try:
        L = spd_factor(model.E11)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"E11 is not symmetric positive definite: {exc}") from None
    notes = []
    if model.n_p == 0:
        return ValidationReport(True, 0, 1.0, ("no constraint (n_p = 0)",))
    sv = np.linalg.svd(model.A12, compute_uv=False)
    rank = int(np.count_nonzero(sv > 1e-13 * max(sv[0], np.finfo(float).tiny)))
    if rank < model.n_p:
        notes.append(f"A12 rank {rank} < n_p = {model.n_p}")
    S = model.A12.T @ spd_solve(L, model.A12)
    S = 0.5 * (S + S.T)
    try:
        spd_factor(S)
    except np.linalg.LinAlgError:
        raise ModelError("S = A12^T E11^{-1} A12 is singular") from None
    cond = float(np.linalg.cond(S))
    if not np.isfinite(cond) or cond > 1e14:
        raise ModelError(f"S = A12^T E11^{{-1}} A12 is numerically singular (cond {cond:.3g})")
    return ValidationReport(True, rank, cond, tuple(notes))


def dae_rhs(model, v, p, u=None, t=None, uperp=None):
    """Residual pieces of the DAE at one state (``t`` unused; autonomous).

    Returns
    -------
    r_d : A11 v + A12 p + H (v ⊗ v) + B1 u
    r_a : A12^T v + Bperp u_perp
    """
    v = np.asarray(v, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    if v.size != model.n_v or p.size != model.n_p:
        raise ValueError("state dimensions do not match the model")
    r_d = model.A11 @ v + model.A12 @ p + model.quad(v)
    if u is not None:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.size != model.m:
            raise ValueError(f"input has size {u.size}, expected {model.m}")
        r_d = r_d + model.B1 @ u
    r_a = model.A12.T @ v
    if uperp is not None and model.Bperp is not None:
        r_a = r_a + model.Bperp[:, 0] * float(uperp)
    return r_d, r_a


@dataclass(frozen=True)
class ReducedQuadModel:
    """Low-order quadratic ODE

        x' = A x + H q(x) + B u + c + N x u_perp + K u_perp'
             + F[:, 0] u_perp + F[:, 1] u_perp**2

    where ``q(x)`` are the compact quadratic features. All terms except
    ``A`` are optional.
    """

    A: np.ndarray
    H: np.ndarray = None
    B: np.ndarray = None
    c: np.ndarray = None
    N: np.ndarray = None
    K: np.ndarray = None
    F: np.ndarray = None

    def __post_init__(self):
        A = _mat(self.A, name="A")
        r = A.shape[0]
        if A.shape != (r, r):
            raise ValueError(f"A must be square, got {A.shape}")
        object.__setattr__(self, "A", A)
        shapes = {"H": (r, num_quadratic(r)), "c": (r, 1), "N": (r, r),
                  "K": (r, 1), "F": (r, 2)}
        for name in ("H", "B", "c", "N", "K", "F"):
            val = getattr(self, name)
            if val is None:
                continue
            val = _mat(val, shapes.get(name), name)
            if name == "B" and val.shape[0] != r:
                raise ValueError(f"B has {val.shape[0]} rows, expected {r}")
            object.__setattr__(self, name, val)

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def m(self):
        return 0 if self.B is None else self.B.shape[1]

    @property
    def H_full(self):
        return None if self.H is None else expand_quadratic_operator(self.H)

    def rhs(self, x, u=None, uperp=None, udot_perp=None):
        x = np.asarray(x, dtype=float)
        dx = self.A @ x
        if self.H is not None:
            dx = dx + self.H @ quadratic_features(x[:, None])[:, 0]
        if self.B is not None and u is not None:
            dx = dx + self.B @ np.atleast_1d(u)
        if self.c is not None:
            dx = dx + self.c[:, 0]
        if uperp is not None:
            if self.N is not None:
                dx = dx + (self.N @ x) * uperp
            if self.F is not None:
                dx = dx + self.F[:, 0] * uperp + self.F[:, 1] * uperp ** 2
        if self.K is not None and udot_perp is not None:
            dx = dx + self.K[:, 0] * udot_perp
        return dx


@dataclass
class SnapshotSet:
    """Trajectory data on a time grid, one column per time instance."""

    times: np.ndarray
    V: np.ndarray
    P: np.ndarray = None
    U: np.ndarray = None
    Uperp: np.ndarray = None
    uniform: bool = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        if self.times.size < 1:
            raise ValueError("empty time grid")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        ncol = self.times.size
        for name in ("V", "P", "U", "Uperp"):
            val = getattr(self, name)
            if val is None:
                continue
            val = np.asarray(val, dtype=float)
            if val.ndim == 1:
                val = val.reshape(1, -1)
            if val.shape[1] != ncol:
                raise ValueError(
                    f"{name} has {val.shape[1]} columns but there are {ncol} times")
            setattr(self, name, val)
        if self.Uperp is not None and self.Uperp.shape[0] != 1:
            raise ValueError("Uperp must have a single row")
        dts = np.diff(self.times)
        self.uniform = bool(dts.size > 0 and
                            np.max(np.abs(dts - dts.mean())) <= 1e-12 * dts.mean())

    @property
    def dt(self):
        if not self.uniform:
            raise ValueError("time grid is not uniform")
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    @property
    def n_times(self):
        return self.times.size


class SplitMix64:
    """SplitMix64 stream with Box-Muller standard normals.

    Every 64-bit output ``z`` maps to the uniform ``((z >> 11) + 1) * 2**-53``
    in (0, 1]. Normals are produced in pairs ``(R cos θ, R sin θ)`` with
    ``R = sqrt(-2 ln u1)``, ``θ = 2π u2``, returned cosine first.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed):
        self.state = int(seed) & self._MASK
        self._spare = None

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self):
        return ((self.next_u64() >> 11) + 1) * 2.0 ** -53

    def normal(self):
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1, u2 = self.uniform(), self.uniform()
        R = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        self._spare = R * np.sin(theta)
        return R * np.cos(theta)

    def normals(self, rows, cols):
        """A (rows, cols) matrix filled column-major."""
        vals = [self.normal() for _ in range(rows * cols)]
        return np.array(vals, dtype=float).reshape((rows, cols), order="F")


def random_demo(seed, n_v, n_p, m, inhomogeneous=False):
    """Deterministic random :class:`QuadDaeModel`.

    Draw order from one :class:`SplitMix64` stream, each matrix filled
    column-major: ``W (nv, nv)``, ``G (nv, nv)``, ``A12 (nv, np)``,
    ``B1 (nv, m)``, ``H (nv, nv**2)`` and, if ``inhomogeneous``,
    ``Bperp (np, 1)``. Then

    * ``A11 = -I - W^T W / nv`` (symmetric negative definite),
    * ``E11 = I + 0.1 G^T G``,
    * ``A12``, ``B1`` and ``H`` are scaled by ``1/nv``; ``Bperp`` is not.
    """
    if not (n_v > n_p >= 0) or m < 0:
        raise ValueError(f"invalid dimensions n_v={n_v}, n_p={n_p}, m={m}")
    if inhomogeneous and n_p == 0:
        raise ValueError("an inhomogeneous constraint needs n_p >= 1")
    rng = SplitMix64(seed)
    W = rng.normals(n_v, n_v)
    G = rng.normals(n_v, n_v)
    A12 = rng.normals(n_v, n_p) / n_v
    B1 = rng.normals(n_v, m) / n_v
    H = rng.normals(n_v, n_v * n_v) / n_v
    Bperp = rng.normals(n_p, 1) if inhomogeneous else None
    I = np.eye(n_v)
    model = QuadDaeModel(
        E11=I + 0.1 * G.T @ G,
        A11=-I - W.T @ W / n_v,
        A12=A12,
        H=H,
        B1=B1,
        Bperp=Bperp,
    )
    validate(model)
    return model
