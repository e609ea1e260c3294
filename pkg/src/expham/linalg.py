"""Dense linear algebra shared by all integrators.

Matrix exponentials are evaluated by scaling-and-squaring with a diagonal
Pade approximant (scipy.linalg.expm); the first phi function

    phi(z) = (exp(z) - 1) / z,   phi(0) = 1,

is read off the augmented exponential exp([[V, I], [0, 0]]), whose
top-right block equals phi(V).  This extends analytically to singular V
and keeps exp(V) = I + V phi(V) true to rounding.

Linear systems are solved by LU with partial pivoting; a pivot below
``SINGULARITY_RTOL * max|A|`` aborts with :class:`SingularMatrixError` so
that an unstable integrator step is reported instead of silently producing
garbage.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrixError",
    "as_matrix",
    "as_vector",
    "matrix_exponential",
    "phi1",
    "expm_phi1",
    "solve_linear",
    "SINGULARITY_RTOL",
    "SOLVE_RESIDUAL_RTOL",
]

# Pivot threshold, relative to max|A|, below which a solve is rejected.
SINGULARITY_RTOL = 1e-13
# Documented backward-error target of solve_linear on well-conditioned systems.
SOLVE_RESIDUAL_RTOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """A pivot fell below the relative singularity threshold."""


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Validate and return ``a`` as a finite float64 2-d array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got ndim={a.ndim}")
    if square and a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Validate and return ``v`` as a finite float64 1-d array."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got ndim={v.ndim}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected length {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """Return ``exp(t*A)`` for a square matrix A."""
    A = as_matrix(A, square=True)
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    return scipy.linalg.expm(t * A)


def phi1(V) -> np.ndarray:
    """Return ``phi(V) = (exp(V) - 1)/V``, extended analytically at 0.

    Computed from the augmented exponential rather than by inverting V, so
    singular V is fine.
    """
    return expm_phi1(V, 1.0)[1]


def expm_phi1(A, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Return the pair ``(exp(h*A), phi(h*A))`` from one augmented expm.

    Taking both blocks from the same augmented exponential keeps the
    identity exp(hA) = I + hA phi(hA) satisfied to rounding.
    """
    A = as_matrix(A, square=True)
    n = A.shape[0]
    G = np.zeros((2 * n, 2 * n))
    G[:n, :n] = h * A
    G[:n, n:] = np.eye(n)
    W = scipy.linalg.expm(G)
    return np.ascontiguousarray(W[:n, :n]), np.ascontiguousarray(W[:n, n:])


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot is below
    ``SINGULARITY_RTOL * max|A|`` (covers exactly singular input as well).
    """
    A = as_matrix(A, square=True)
    b = as_vector(b, dim=A.shape[0])
    if A.shape[0] == 0:
        return np.zeros(0)
    with warnings.catch_warnings():
        # exact singularity is reported through SingularMatrixError below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    scale = np.abs(A).max()
    if scale == 0.0 or np.abs(lu.diagonal()).min() < SINGULARITY_RTOL * scale:
        raise SingularMatrixError(
            "pivot below %.1e * max|A|: matrix is singular to working precision"
            % SINGULARITY_RTOL
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
