"""Small dense symmetric-matrix helpers shared by every agent.

Matrices are plain ``float64`` numpy arrays. Symmetry is kept exact by
construction: rank-1 updates use ``outer(x, x)`` (whose (i, j) and (j, i)
entries are the same product) and noise matrices are symmetrized before
they are added.
"""

import numpy as np

from . import _accel
from .errors import NotPositiveDefinite


def as_vector(x):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_symmetric(a, atol=0.0):
    """Validate a square matrix and return it as float64.

    ``atol`` = 0 demands exact symmetry; a positive tolerance symmetrizes
    inputs that are symmetric up to rounding.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.array_equal(m, m.T):
        if atol <= 0.0 or not np.allclose(m, m.T, rtol=0.0, atol=atol):
            raise ValueError("matrix is not symmetric")
        m = 0.5 * (m + m.T)
    return m


def symmetrize(a):
    return 0.5 * (a + a.T)


def rank1_update(a, x, weight=1.0):
    """In place ``a += weight * x x^T``; returns ``a``."""
    a += weight * np.outer(x, x)
    return a


def cholesky_factor(a):
    """Lower Cholesky factor, raising NotPositiveDefinite on failure."""
    low = _accel.cholesky(np.asarray(a, dtype=np.float64))
    if low is None:
        raise NotPositiveDefinite("Cholesky factorization failed")
    return low


def solve_factored(low, b):
    return _accel.chol_solve(low, as_vector(b))


def psd_solve(a, b):
    """Solve ``a x = b`` for positive definite ``a`` via Cholesky."""
    a = np.asarray(a, dtype=np.float64)
    b = as_vector(b)
    if a.shape != (b.shape[0], b.shape[0]):
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return _accel.chol_solve(cholesky_factor(a), b)


def inv_norms_factored(low, xs):
    """``sqrt(x_i^T A^{-1} x_i)`` for each row of ``xs`` given A's factor."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        return float(_accel.inv_norms(low, xs[None, :])[0])
    return _accel.inv_norms(low, xs)


def mahalanobis_inv_norm(a, x):
    """``||x||_{A^{-1}} = sqrt(x^T A^{-1} x)`` for positive definite ``a``."""
    x = as_vector(x)
    low = cholesky_factor(a)
    return inv_norms_factored(low, x)


def weighted_norm(a, x):
    """``||x||_A = sqrt(x^T A x)``; clipped at 0 against rounding."""
    x = as_vector(x)
    return float(np.sqrt(max(float(x @ (a @ x)), 0.0)))


def min_eigenvalue(a):
    """Smallest eigenvalue of a symmetric matrix."""
    m = np.asarray(a, dtype=np.float64)
    return float(np.linalg.eigvalsh(m)[0])


def has_eigen_floor(a, floor):
    """True when ``a - floor * I`` admits a Cholesky factorization."""
    m = np.asarray(a, dtype=np.float64)
    return _accel.cholesky(m - floor * np.eye(m.shape[0])) is not None


def operator_norm(a):
    """Spectral norm of a symmetric matrix."""
    ev = np.linalg.eigvalsh(np.asarray(a, dtype=np.float64))
    return float(max(abs(ev[0]), abs(ev[-1])))
