"""Semilinear problem definition: xdot = Q M x + Q grad U(x).

Q is the structure matrix (skew-symmetric in the conservative case), M the
symmetric matrix of the quadratic energy, and U a polynomial potential.
The energy H(x) = x^T M x / 2 + U(x) is invariant along exact flows when Q
is skew.  Damped variants carry a non-skew Q block; the ``conservative``
flag gates the energy-identity diagnostics.
"""

from __future__ import annotations

import numpy as np

from .linalg import as_matrix, as_vector
from .polynomial import PolynomialPotential, homogenize

__all__ = ["SemilinearSystem", "SYMMETRY_ATOL_SCALE"]

# Relative tolerance for the structural checks Q^T = -Q and M^T = M.
SYMMETRY_ATOL_SCALE = 1e-14


class SemilinearSystem:
    """Immutable triple (Q, M, U) with the cached linear part A = Q M."""

    def __init__(self, Q, M, potential: PolynomialPotential, *,
                 conservative: bool | None = None, name: str = ""):
        Q = as_matrix(Q, square=True)
        M = as_matrix(M, square=True)
        n = Q.shape[0]
        if M.shape[0] != n:
            raise ValueError(f"Q is {Q.shape}, M is {M.shape}")
        if potential.dim != n:
            raise ValueError(f"potential has dim {potential.dim}, matrices have {n}")
        scale = max(np.abs(M).max(), 1.0)
        if np.abs(M - M.T).max() > SYMMETRY_ATOL_SCALE * scale:
            raise ValueError("M must be symmetric")
        qscale = max(np.abs(Q).max(), 1.0)
        skew = np.abs(Q + Q.T).max() <= SYMMETRY_ATOL_SCALE * qscale
        if conservative is None:
            conservative = skew
        elif conservative and not skew:
            raise ValueError("conservative flag set but Q is not skew-symmetric")
        self.Q = Q
        self.M = M
        self.potential = potential
        self.A = Q @ M
        self.conservative = bool(conservative)
        self.name = name
        # exponential-operator cache, filled by the steppers: (h,) -> (E, P)
        self._op_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def __repr__(self):
        label = self.name or "system"
        return (f"SemilinearSystem({label}, dim={self.dim}, "
                f"conservative={self.conservative})")

    def vector_field(self, x) -> np.ndarray:
        """Right-hand side A x + Q grad U(x)."""
        x = as_vector(x, self.dim)
        return self.A @ x + self.Q @ self.potential.gradient(x)

    def nonlinear_field(self, x) -> np.ndarray:
        """The non-linear part Q grad U(x)."""
        x = as_vector(x, self.dim)
        return self.Q @ self.potential.gradient(x)

    def energy(self, x) -> float:
        """H(x) = x^T M x / 2 + U(x)."""
        x = as_vector(x, self.dim)
        return 0.5 * float(x @ (self.M @ x)) + self.potential.value(x)

    def grad_energy(self, x) -> np.ndarray:
        """grad H(x) = M x + grad U(x)."""
        x = as_vector(x, self.dim)
        return self.M @ x + self.potential.gradient(x)

    def homogenized(self) -> "SemilinearSystem":
        """Extend by one auxiliary coordinate making U homogeneous.

        Q and M get a zero row and column prepended, which preserves
        skewness and symmetry; the auxiliary coordinate is constant along
        the extended flow.
        """
        n = self.dim
        Qb = np.zeros((n + 1, n + 1))
        Mb = np.zeros((n + 1, n + 1))
        Qb[1:, 1:] = self.Q
        Mb[1:, 1:] = self.M
        return SemilinearSystem(Qb, Mb, homogenize(self.potential),
                                conservative=self.conservative,
                                name=(self.name + "_homogenized") if self.name else "")
