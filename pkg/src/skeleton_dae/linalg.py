"""Dense real linear algebra used by the chain builder and the solvers.

Matrices are plain ``numpy.ndarray`` values of dtype float64.  Zero-sized
shapes (``n x 0``, ``0 x n``) are legal everywhere, which lets a rank-zero
factorization flow through products without special cases.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergenceError, NonFiniteError, SingularError, ToleranceAmbiguous

DEFAULT_TOL = 1e-10


def as_matrix(m, name="matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array (read-only copy)."""
    a = np.array(m, dtype=np.float64, copy=True)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, 0)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    a.flags.writeable = False
    return a


def as_vector(v, name="vector") -> np.ndarray:
    a = np.array(v, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return a


def max_norm(m) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m))) if m.size else 0.0


def singular_values(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def _rank_from_sv(s, tol):
    if s.size == 0 or s[0] == 0.0:
        return 0, 0.0
    cutoff = tol * s[0]
    return int(np.count_nonzero(s > cutoff)), cutoff


def _warn_if_ambiguous(s, cutoff):
    if cutoff <= 0.0:
        return
    near = s[(s > cutoff / 10.0) & (s < cutoff * 10.0)]
    if near.size:
        warnings.warn(
            f"singular value(s) {near.tolist()} within a factor of 10 of the rank cutoff {cutoff:.3e}",
            ToleranceAmbiguous,
            stacklevel=3,
        )


@dataclass(frozen=True)
class SkeletonFactorization:
    """``left @ right`` reproduces the factored matrix; both factors have rank ``rank``."""

    left: np.ndarray
    right: np.ndarray
    rank: int
    tol_used: float
    singular_values: np.ndarray

    def product(self) -> np.ndarray:
        return self.left @ self.right


def full_rank_factorize(m, tol: float = DEFAULT_TOL) -> SkeletonFactorization:
    """Skeleton (full-rank) factorization ``m = left @ right``.

    Computed from the truncated SVD ``U_r S_r V_r^T`` with ``left = U_r S_r``
    and ``right = V_r^T``.  Rank is the number of singular values above
    ``tol * sigma_max``.  Each row of ``right`` is signed so that its
    largest-magnitude entry is positive, which makes the output deterministic.

    Emits :class:`ToleranceAmbiguous` when a singular value lies within a
    factor of 10 of the cutoff.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    a = as_matrix(m)
    rows, cols = a.shape
    if a.size == 0:
        return SkeletonFactorization(np.zeros((rows, 0)), np.zeros((0, cols)), 0, tol, np.zeros(0))

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    r, cutoff = _rank_from_sv(s, tol)
    _warn_if_ambiguous(s, cutoff)

    left = u[:, :r] * s[:r]
    right = vt[:r, :].copy()
    if r:
        pivots = np.argmax(np.abs(right), axis=1)
        signs = np.sign(right[np.arange(r), pivots])
        signs[signs == 0] = 1.0
        right *= signs[:, None]
        left *= signs[None, :]
    return SkeletonFactorization(left, right, r, tol, s)


def rank_of(m, tol: float = DEFAULT_TOL) -> int:
    """Numerical rank: count of singular values above ``tol * sigma_max``."""
    a = as_matrix(m)
    return _rank_from_sv(singular_values(a), tol)[0]


def eigenvalues(m) -> np.ndarray:
    """All eigenvalues of a square matrix, with multiplicity, as complex numbers.

    LAPACK ``geev`` (Hessenberg QR).  The computed values are exact for a
    matrix ``m + E`` with ``||E||_2`` of order ``n * eps * ||m||_2``; a
    defective eigenvalue of multiplicity ``k`` can therefore move by about
    ``(eps * ||m||)^(1/k)``.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"eigenvalues need a square matrix, got {a.shape}")
    if a.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(a).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(str(exc)) from exc


def spectral_abscissa(m) -> float:
    ev = eigenvalues(m)
    return float(np.max(ev.real)) if ev.size else -np.inf


def is_invertible(m, tol: float = DEFAULT_TOL) -> bool:
    a = np.asarray(m)
    if a.shape[0] != a.shape[1]:
        return False
    if a.size == 0:
        return True
    s = singular_values(a)
    return bool(s[0] > 0 and s[-1] > tol * s[0])


def solve_linear(m, rhs, tol: float = DEFAULT_TOL, return_cond: bool = False):
    """Solve ``m @ y = rhs`` by LU with partial pivoting.

    Raises :class:`SingularError` when ``sigma_min <= tol * sigma_max``.
    With ``return_cond=True`` returns ``(y, cond2)``.
    """
    a = as_matrix(m)
    b = np.asarray(rhs, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise NonFiniteError("rhs contains NaN or Inf")
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"solve_linear needs a square matrix, got {a.shape}")
    if n == 0:
        y = np.zeros_like(b)
        return (y, 1.0) if return_cond else y
    s = singular_values(a)
    if s[0] == 0 or s[-1] <= tol * s[0]:
        raise SingularError(f"matrix is singular at tolerance {tol:g} (sigma_min={s[-1]:.3e})")
    y = np.linalg.solve(a, b)
    if return_cond:
        return y, float(s[0] / s[-1])
    return y


def inverse(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    a = as_matrix(m)
    return solve_linear(a, np.eye(a.shape[0]), tol=tol)


def null_space(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of ``ker m`` under the relative rank rule."""
    a = as_matrix(m)
    cols = a.shape[1]
    if a.size == 0:
        return np.eye(cols)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    r, _ = _rank_from_sv(s, tol)
    return vt[r:].T.copy()
