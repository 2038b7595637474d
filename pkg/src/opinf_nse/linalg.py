"""Dense linear algebra helpers shared by the reduction and inference code.

Quadratic features are handled in two layouts:

* the *full* Kronecker layout ``x ⊗ x`` of length ``r**2`` (used when
  exchanging operators), and
* the *compact* layout of the ``r(r+1)/2`` unique monomials ``x_i x_j`` with
  ``i <= j`` in lexicographic order (used inside every least-squares solve).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "TruncatedSvd",
    "TruncationError",
    "kron_columnwise",
    "compress_quadratic",
    "quadratic_features",
    "expand_quadratic_operator",
    "compress_quadratic_operator",
    "truncated_svd",
    "min_norm_lstsq",
    "spd_factor",
    "spd_solve",
    "num_quadratic",
]

ORTHO_TOL = 1e-10


class TruncationError(ValueError):
    """Raised when a singular-value tolerance discards every direction."""


def num_quadratic(r):
    """Number of unique quadratic monomials in ``r`` variables."""
    return r * (r + 1) // 2


def _as_finite_2d(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def _triu_index(r):
    # flat indices (i*r + j) of the i <= j pairs, lexicographic
    i, j = np.triu_indices(r)
    return i, j


def kron_columnwise(G):
    """Column-wise Kronecker product ``G ⊗̃ G``.

    Column ``k`` of the result is ``g_k ⊗ g_k``.

    Parameters
    ----------
    G : (r, N) array_like

    Returns
    -------
    (r**2, N) ndarray
    """
    G = _as_finite_2d(G, "G")
    r, N = G.shape
    return np.einsum("ik,jk->ijk", G, G).reshape(r * r, N)


def compress_quadratic(G_kron):
    """Drop the duplicated cross terms of a column-wise Kronecker product.

    Parameters
    ----------
    G_kron : (r**2, N) array_like
        Output of :func:`kron_columnwise`.

    Returns
    -------
    (r(r+1)/2, N) ndarray
        Rows ``x_i x_j`` for ``i <= j``; cross terms appear once, unscaled.
    """
    G_kron = _as_finite_2d(G_kron, "G_kron")
    r2 = G_kron.shape[0]
    r = int(round(np.sqrt(r2)))
    if r * r != r2:
        raise ValueError(f"row count {r2} is not a perfect square")
    i, j = _triu_index(r)
    return G_kron[i * r + j]


def quadratic_features(X):
    """Compact quadratic features of the columns of ``X`` (no r**2 temporary)."""
    X = _as_finite_2d(X, "X")
    i, j = _triu_index(X.shape[0])
    return X[i] * X[j]


def expand_quadratic_operator(H_compact):
    """Convert a compact quadratic operator to the ``H (x ⊗ x)`` layout.

    Cross-term coefficients are split evenly between the ``(i, j)`` and
    ``(j, i)`` slots, so the expanded operator is symmetric in its two
    Kronecker factors.
    """
    H_compact = np.asarray(H_compact, dtype=float)
    if H_compact.ndim != 2:
        raise ValueError("H_compact must be two-dimensional")
    q, s = H_compact.shape
    r = int(round((np.sqrt(8 * s + 1) - 1) / 2))
    if num_quadratic(r) != s:
        raise ValueError(f"{s} columns is not r(r+1)/2 for any integer r")
    i, j = _triu_index(r)
    H = np.zeros((q, r * r))
    diag = i == j
    H[:, i[diag] * r + j[diag]] = H_compact[:, diag]
    off = ~diag
    half = 0.5 * H_compact[:, off]
    H[:, i[off] * r + j[off]] = half
    H[:, j[off] * r + i[off]] = half
    return H


def compress_quadratic_operator(H):
    """Convert an ``H (x ⊗ x)`` operator to the compact layout.

    Works for non-symmetric ``H``: the ``(i, j)`` and ``(j, i)`` columns are
    summed, which leaves ``H (x ⊗ x)`` unchanged for every ``x``.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise ValueError("H must be two-dimensional")
    q, r2 = H.shape
    r = int(round(np.sqrt(r2)))
    if r * r != r2:
        raise ValueError(f"column count {r2} is not a perfect square")
    i, j = _triu_index(r)
    Hc = H[:, i * r + j].copy()
    off = i != j
    Hc[:, off] += H[:, j[off] * r + i[off]]
    return Hc


@dataclass(frozen=True)
class TruncatedSvd:
    """Singular triplets of a matrix that exceed a tolerance."""

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray
    tol_used: float
    all_singular_values: np.ndarray

    @property
    def rank(self):
        return self.singular_values.size

    def reconstruct(self):
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def truncated_svd(M, tol=0.0):
    """Thin SVD of ``M`` keeping only singular values strictly above ``tol``.

    Uses a deterministic LAPACK SVD. A result of rank 0 is returned, not
    raised; callers decide whether that is acceptable.

    Parameters
    ----------
    M : (n, N) array_like
    tol : float
        Absolute threshold, ``tol >= 0``. It never drops below the round-off
        floor ``max(n, N) * eps * sigma_1``, so ``tol=0`` discards singular
        values that are zero up to rounding; ``tol_used`` reports the
        threshold actually applied.

    Returns
    -------
    TruncatedSvd
    """
    M = _as_finite_2d(M, "M")
    if M.size == 0:
        raise ValueError("cannot factor an empty matrix")
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")
    U, s, Vt = sla.svd(M, full_matrices=False, lapack_driver="gesvd")
    cut = max(float(tol), max(M.shape) * np.finfo(float).eps * s[0])
    k = int(np.count_nonzero(s > cut))
    return TruncatedSvd(
        left_vectors=U[:, :k],
        singular_values=s[:k],
        right_vectors=Vt[:k].T,
        tol_used=cut,
        all_singular_values=s,
    )


def min_norm_lstsq(D, RHS, tol=0.0, rtol=None):
    """Minimum-norm solution ``X`` of ``min ||X D - RHS||_F``.

    The data matrix is replaced by its tolerance-truncated SVD
    ``D ≈ U S V^T`` and ``X = RHS V S^{-1} U^T``.

    Parameters
    ----------
    D : (k, N) array_like
        Data (regressor) matrix, one sample per column.
    RHS : (q, N) array_like
        Targets, one sample per column.
    tol : float
        Absolute singular-value threshold.
    rtol : float, optional
        If given, the threshold is ``max(tol, rtol * sigma_1)``.

    Returns
    -------
    (q, k) ndarray
    """
    D = _as_finite_2d(D, "D")
    RHS = _as_finite_2d(RHS, "RHS")
    if D.shape[1] != RHS.shape[1]:
        if RHS.shape[0] == D.shape[1] and RHS.shape[1] == 1:
            RHS = RHS.T
        else:
            raise ValueError(
                f"D has {D.shape[1]} columns but RHS has {RHS.shape[1]}")
    if rtol is not None:
        smax = sla.svd(D, compute_uv=False, lapack_driver="gesvd")[0]
        tol = max(tol, rtol * smax)
    svd = truncated_svd(D, tol)
    if svd.rank == 0:
        raise TruncationError(
            f"tolerance {tol:g} exceeds every singular value of the data "
            f"(largest {svd.all_singular_values[0]:g})")
    return ((RHS @ svd.right_vectors) / svd.singular_values) @ svd.left_vectors.T


def spd_factor(M):
    """Lower Cholesky factor ``L`` with ``L L^T = M``.

    Raises
    ------
    numpy.linalg.LinAlgError
        If ``M`` is not symmetric positive definite.
    """
    M = _as_finite_2d(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got {M.shape}")
    scale = np.linalg.norm(M)
    if np.linalg.norm(M - M.T) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise np.linalg.LinAlgError("matrix is not symmetric")
    try:
        return sla.cholesky(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"matrix is not positive definite: {exc}") from None


def spd_solve(L, B):
    """Solve ``(L L^T) X = B`` given the lower factor ``L``."""
    return sla.cho_solve((L, True), B)
