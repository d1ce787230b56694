"""Dense low-rank primitives: QR, truncated SVD and interpolative decompositions.

All residuals are measured in the Frobenius norm. The interpolative
decomposition (ID) is built on LAPACK's column-pivoted Householder QR
(``geqp3``); coefficients larger than ``ID_COEFF_CAP`` are repaired by a
bounded number of determinant-increasing column swaps before the cap is
checked.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import InterpolationBoundError, InvalidInputError

ID_COEFF_CAP = 2.0
_MAX_SWAPS = 64
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class InterpolativeDecomposition:
    """``A ~= A[:, skeleton] @ coeff`` with ``coeff[:, skeleton] == I``."""

    skeleton: np.ndarray
    coeff: np.ndarray

    @property
    def rank(self):
        return len(self.skeleton)


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return len(self.s)


def as_matrix(A, name="A"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


def _rank_tol(m, n):
    return 10.0 * max(m, n, 1) * _EPS


def qr_factor(A):
    """Rank-revealing QR ``A = Q @ R``.

    ``Q`` has as many columns as the numerical rank of ``A``; ``R`` is the
    matching rows of the pivoted triangular factor with the pivoting undone,
    so it is upper triangular only up to a column permutation. Signs are
    normalized so the pivots on the triangular part are positive.
    """
    A = as_matrix(A)
    m, n = A.shape
    if m == 0 or n == 0 or not np.any(A):
        return np.zeros((m, 0)), np.zeros((0, n))
    Q, R, perm = sla.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    r = int(np.count_nonzero(d > _rank_tol(m, n) * d[0]))
    Q, R = Q[:, :r], R[:r]
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q = Q * signs
    R = R * signs[:, None]
    out = np.empty_like(R)
    out[:, perm] = R
    return Q, out


def svd_truncated(A, eps):
    """Shortest SVD with ``||U diag(s) V^t - A||_F <= eps``."""
    A = as_matrix(A)
    if eps < 0:
        raise InvalidInputError("eps must be nonnegative")
    m, n = A.shape
    if m == 0 or n == 0:
        return SvdResult(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    # tail[k] = Frobenius error of keeping the leading k triplets
    tail = np.sqrt(np.append(np.cumsum((s**2)[::-1])[::-1], 0.0))
    k = int(np.argmax(tail <= eps))
    return SvdResult(U[:, :k].copy(), s[:k].copy(), Vt[:k].T.copy())


def _pivoted_r(A):
    R, perm = sla.qr(A, mode="r", pivoting=True)
    return R, perm


def _trailing_norms(R, n):
    """``out[k] = ||R[k:, k:]||_F`` for k = 0..min(m, n)."""
    sq = np.sum(R**2, axis=1)
    tail = np.append(np.cumsum(sq[::-1])[::-1], 0.0)
    return np.sqrt(tail)


def _coefficients(R, k):
    return sla.solve_triangular(R[:k, :k], R[:k, k:], lower=False)


def _repair(A, R, perm, k):
    """Swap skeleton/redundant columns while some coefficient exceeds the cap.

    Each swap multiplies ``|det R11|`` by the offending coefficient (> cap),
    so the loop cannot cycle.
    """
    for _ in range(_MAX_SWAPS):
        T = _coefficients(R, k)
        if T.size == 0:
            break
        i, j = np.unravel_index(np.argmax(np.abs(T)), T.shape)
        if abs(T[i, j]) <= ID_COEFF_CAP or not np.isfinite(T[i, j]):
            break
        perm = perm.copy()
        perm[i], perm[k + j] = perm[k + j], perm[i]
        R = sla.qr(A[:, perm], mode="r")[0]
    return R, perm


def _assemble(R, perm, k, n):
    X = np.zeros((k, n))
    X[:, perm[:k]] = np.eye(k)
    if k < n:
        X[:, perm[k:]] = _coefficients(R, k)
    if k and np.max(np.abs(X)) > ID_COEFF_CAP:
        raise InterpolationBoundError(
            f"ID coefficient {np.max(np.abs(X)):.3g} exceeds cap {ID_COEFF_CAP}"
        )
    J = np.array(perm[:k], dtype=np.int64)
    order = np.argsort(J)
    return InterpolativeDecomposition(J[order], X[order])


def numerical_rank(R):
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d > _rank_tol(*R.shape) * d[0]))


def interpolate_fixed(A, k, cap_numerical_rank=False):
    """Rank-``k`` ID of the columns of ``A``.

    With ``cap_numerical_rank`` the rank is lowered to the numerical rank of
    ``A`` at machine precision, which avoids dividing by roundoff-sized
    pivots on rank-deficient input.
    """
    A = as_matrix(A)
    m, n = A.shape
    if k < 0 or k > min(m, n):
        raise InvalidInputError(f"rank {k} exceeds matrix dimensions {A.shape}")
    if k == 0:
        return InterpolativeDecomposition(np.zeros(0, dtype=np.int64), np.zeros((0, n)))
    R, perm = _pivoted_r(A)
    if cap_numerical_rank:
        k = min(k, numerical_rank(R))
        if k == 0:
            return InterpolativeDecomposition(np.zeros(0, dtype=np.int64), np.zeros((0, n)))
    R, perm = _repair(A, R, perm, k)
    return _assemble(R, perm, k, n)


def interpolate_tol(A, eps):
    """ID whose Frobenius residual ``||A[:, J] X - A||_F`` is at most ``eps``.

    The rank is the first pivot count at which the pivoted-QR residual drops
    to ``eps`` or below.
    """
    A = as_matrix(A)
    if eps < 0:
        raise InvalidInputError("eps must be nonnegative")
    m, n = A.shape
    if m == 0 or n == 0:
        return InterpolativeDecomposition(np.zeros(0, dtype=np.int64), np.zeros((0, n)))
    R0, perm0 = _pivoted_r(A)
    tail = _trailing_norms(R0, n)
    k = int(np.argmax(tail <= eps))
    kmax = min(m, n)
    while True:
        if k == 0:
            return InterpolativeDecomposition(np.zeros(0, dtype=np.int64), np.zeros((0, n)))
        R, perm = _repair(A, R0, perm0, k)
        # a repair swap changes the residual; grow the rank if it broke the bound
        if perm is perm0 or k == kmax or _trailing_norms(R, n)[k] <= eps:
            return _assemble(R, perm, k, n)
        k += 1


def id_residual(A, dec):
    """Frobenius residual of an ID, for diagnostics and tests."""
    A = np.asarray(A, dtype=np.float64)
    return float(np.linalg.norm(A[:, dec.skeleton] @ dec.coeff - A))
