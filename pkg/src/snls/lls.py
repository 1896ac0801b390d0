"""Dense linear least squares through the singular value decomposition.

Everything here is a pure function of its inputs.  The rank cutoff is shared
by the pseudoinverse, the minimum-norm solve and the projector so the three
stay mutually consistent for rank-deficient matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "RankInfo",
    "as_matrix",
    "default_tolerance",
    "pseudoinverse",
    "solve_lls",
    "column_space_projector",
]


@dataclass(frozen=True)
class RankInfo:
    numerical_rank: int
    sv_tolerance: float
    singular_values: np.ndarray


def as_matrix(A, name="matrix"):
    """Return ``A`` as a finite 2-D float array or raise InvalidInputError."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _as_vector(b, length, name):
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] != length:
        raise InvalidInputError(f"{name} must be a vector of length {length}, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return b


def default_tolerance(shape, sigma_max):
    """``max(m, n) * eps * sigma_max``, the usual SVD rank cutoff."""
    return max(shape) * np.finfo(float).eps * sigma_max


def _svd(A, sv_tolerance):
    if sv_tolerance < 0 or not np.isfinite(sv_tolerance):
        raise InvalidInputError("sv_tolerance must be finite and >= 0")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    sigma_max = s[0] if s.size else 0.0
    tol = sv_tolerance if sv_tolerance > 0 else default_tolerance(A.shape, sigma_max)
    rank = int(np.count_nonzero(s > tol))
    return U, s, Vt, RankInfo(rank, float(tol), s)


def pseudoinverse(A, sv_tolerance=0.0):
    """Moore-Penrose pseudoinverse of ``A``.

    Parameters
    ----------
    A : array_like, shape (m, n)
    sv_tolerance : float
        Singular values at or below this are treated as zero.  ``0`` selects
        :func:`default_tolerance`.

    Returns
    -------
    pinv : ndarray, shape (n, m)
    info : RankInfo
    """
    A = as_matrix(A)
    U, s, Vt, info = _svd(A, sv_tolerance)
    r = info.numerical_rank
    pinv = (Vt[:r].T / s[:r]) @ U[:, :r].T
    return pinv, info


def solve_lls(A, b, sv_tolerance=0.0):
    """Minimum-norm minimizer of ``||A x - b||_2``."""
    A = as_matrix(A, "design")
    b = _as_vector(b, A.shape[0], "rhs")
    U, s, Vt, info = _svd(A, sv_tolerance)
    r = info.numerical_rank
    return Vt[:r].T @ ((U[:, :r].T @ b) / s[:r])


def column_space_projector(A, sv_tolerance=0.0):
    """Orthogonal projector ``A A+`` onto the numerical column space of ``A``."""
    A = as_matrix(A)
    U, _, _, info = _svd(A, sv_tolerance)
    Ur = U[:, : info.numerical_rank]
    return Ur @ Ur.T
