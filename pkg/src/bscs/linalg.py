"""Dense linear-algebra kernel shared by the CTMC and QBD solvers.

Matrices are plain 2-D ``float64`` numpy arrays.  The LU factorization is
LAPACK's partial-pivoting ``getrf`` (via scipy); this module adds the pivot
threshold, shape checks and probability-vector hygiene the solvers rely on.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from .errors import ShapeMismatch, SingularMatrix

EPS_PIV = 1e-12   # relative to ||a||_inf
EPS_NORM = 1e-9
EPS_NEG = 1e-12


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def inf_norm(a) -> float:
    """Maximum absolute row sum (vectors: maximum absolute entry)."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return float(np.max(np.abs(a))) if a.size else 0.0
    return float(np.max(np.sum(np.abs(a), axis=1)))


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot add {a.shape} and {b.shape}")
    return a + b


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def scale(a, k: float) -> np.ndarray:
    return as_matrix(a) * float(k)


def lu_solve(a, rhs) -> np.ndarray:
    """Solve ``a @ x = rhs`` by LU with partial pivoting.

    Raises :class:`SingularMatrix` if any pivot falls below
    ``EPS_PIV * ||a||_inf``.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"lu_solve needs a square matrix, got {a.shape}")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"rhs length {rhs.shape[0]} does not match {a.shape}")
    norm = inf_norm(a)
    if norm == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    k = int(np.argmin(pivots))
    if pivots[k] < EPS_PIV * norm:
        raise SingularMatrix(f"pivot {pivots[k]:.3e} at step {k} below threshold {EPS_PIV * norm:.3e}")
    return sla.lu_solve((lu, piv), rhs, check_finite=False)


def solve_left(a, rhs) -> np.ndarray:
    """Solve the row-vector system ``x @ a = rhs``."""
    a = as_matrix(a)
    return lu_solve(a.T, rhs)


def stationary_vector(q, column: int = 0) -> np.ndarray:
    """Stationary distribution of a finite irreducible generator ``q``.

    The balance equation for ``column`` is replaced by the normalization
    ``sum(p) = 1``.
    """
    q = np.array(as_matrix(q))
    n = q.shape[0]
    q[:, column] = 1.0
    rhs = np.zeros(n)
    rhs[column] = 1.0
    return as_prob_vector(solve_left(q, rhs))


def as_prob_vector(x, eps_neg: float = EPS_NEG, eps_norm: float = EPS_NORM) -> np.ndarray:
    """Validate a probability vector and clamp round-off negatives to zero."""
    p = np.asarray(x, dtype=float).copy()
    if p.ndim != 1:
        raise ShapeMismatch(f"probability vector must be 1-D, got shape {p.shape}")
    if np.any(p < -eps_neg):
        raise ValueError(f"probability vector has entry {p.min():.3e} below -{eps_neg}")
    p[p < 0] = 0.0
    total = p.sum()
    if abs(total - 1.0) > eps_norm:
        raise ValueError(f"probability vector sums to {total!r}")
    return p
