"""Polynomial potentials and their discrete gradients.

A potential U is stored as a list of monomials.  Internally each monomial
``c * x_{i1} * x_{i2} * ... * x_{id}`` is kept as a row of variable
indices (repeated indices encode powers, -1 pads shorter terms), which
makes exact gradients, Hessian actions and Hessian assembly uniform in the
degree and cheap to hand to the compiled kernels.

Large structured potentials (lattice/grid models) may attach vectorized
callbacks that evaluate the same polynomial; the callbacks win in the
numeric hot paths while the monomial form stays the single source of truth
for polarization, homogenization and cross-checks.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .linalg import as_vector

__all__ = [
    "PolynomialPotential",
    "kahan_gradient",
    "avf_gradient",
    "polarized_gradient",
    "multilinear_form",
    "homogenize",
    "gauss_legendre_01",
]


def gauss_legendre_01(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def _terms_to_index_rows(dim, terms):
    """Convert (coeff, exponent multi-index) pairs to padded index rows."""
    merged: dict[tuple[int, ...], float] = {}
    for coeff, exps in terms:
        exps = tuple(int(e) for e in exps)
        if len(exps) != dim:
            raise ValueError(f"exponent multi-index has length {len(exps)}, expected {dim}")
        if any(e < 0 for e in exps):
            raise ValueError("exponents must be nonnegative")
        merged[exps] = merged.get(exps, 0.0) + float(coeff)
    coeffs, rows = [], []
    for exps in sorted(merged):
        c = merged[exps]
        if c == 0.0:
            continue
        row = []
        for i, e in enumerate(exps):
            row.extend([i] * e)
        coeffs.append(c)
        rows.append(tuple(row))
    return coeffs, rows


class PolynomialPotential:
    """A real polynomial U on R^dim with exact derivatives.

    Parameters
    ----------
    dim : int
        Number of variables.
    terms : iterable of (coeff, exponents)
        Monomials; ``exponents`` is a length-``dim`` multi-index.
    fast_value, fast_gradient, fast_hess_matrix : callables, optional
        Vectorized overrides evaluating the same polynomial.  The Hessian
        callback may return a dense array or a scipy sparse matrix.
    """

    def __init__(self, dim, terms=(), *, fast_value=None, fast_gradient=None,
                 fast_hess_matrix=None, name=""):
        self.dim = int(dim)
        if self.dim < 0:
            raise ValueError("dim must be nonnegative")
        coeffs, rows = _terms_to_index_rows(self.dim, terms)
        self.degree = max((len(r) for r in rows), default=0)
        self.homogeneous = all(len(r) == self.degree for r in rows)
        width = max(self.degree, 1)
        idx = np.full((len(rows), width), -1, dtype=np.int32)
        for t, row in enumerate(rows):
            idx[t, : len(row)] = row
        self.coefficients = np.asarray(coeffs, dtype=float)
        self.indices = idx
        self.fast_value = fast_value
        self.fast_gradient = fast_gradient
        self.fast_hess_matrix = fast_hess_matrix
        self.name = name

    @classmethod
    def zero(cls, dim) -> "PolynomialPotential":
        return cls(dim, [], name="zero")

    def __repr__(self):
        label = self.name or "poly"
        return (f"PolynomialPotential({label}, dim={self.dim}, degree={self.degree}, "
                f"terms={len(self.coefficients)}, homogeneous={self.homogeneous})")

    # -- monomial evaluation ------------------------------------------------

    def _factors(self, x):
        """(T, width) factor matrix x[idx] with 1.0 at padding."""
        safe = np.where(self.indices >= 0, self.indices, 0)
        f = x[safe]
        f[self.indices < 0] = 1.0
        return f

    def value(self, x) -> float:
        x = as_vector(x, self.dim)
        if self.fast_value is not None:
            return float(self.fast_value(x))
        if len(self.coefficients) == 0:
            return 0.0
        return float(self.coefficients @ np.prod(self._factors(x), axis=1))

    def gradient(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        if self.fast_gradient is not None:
            return np.asarray(self.fast_gradient(x), dtype=float)
        grad = np.zeros(self.dim)
        if len(self.coefficients) == 0:
            return grad
        f = self._factors(x)
        width = f.shape[1]
        for r in range(width):
            live = self.indices[:, r] >= 0
            if not np.any(live):
                continue
            others = np.prod(np.delete(f, r, axis=1), axis=1) if width > 1 \
                else np.ones(len(self.coefficients))
            np.add.at(grad, self.indices[live, r], self.coefficients[live] * others[live])
        return grad

    def hessian_matrix(self, x):
        """Hessian of U at x (dense array, or sparse from the fast path)."""
        x = as_vector(x, self.dim)
        if self.fast_hess_matrix is not None:
            return self.fast_hess_matrix(x)
        H = np.zeros((self.dim, self.dim))
        if len(self.coefficients) == 0:
            return H
        f = self._factors(x)
        width = f.shape[1]
        cols = np.arange(width)
        for r in range(width):
            for s in range(width):
                if r == s:
                    continue
                live = (self.indices[:, r] >= 0) & (self.indices[:, s] >= 0)
                if not np.any(live):
                    continue
                keep = cols[(cols != r) & (cols != s)]
                others = np.prod(f[:, keep], axis=1) if keep.size else \
                    np.ones(len(self.coefficients))
                np.add.at(H, (self.indices[live, r], self.indices[live, s]),
                          self.coefficients[live] * others[live])
        return H

    def hessian_action(self, x, v) -> np.ndarray:
        """U''(x) @ v without forming the Hessian when a fast path exists."""
        v = as_vector(v, self.dim)
        H = self.hessian_matrix(x)
        return np.asarray(H @ v, dtype=float).reshape(self.dim)

    # -- kernel export -------------------------------------------------------

    def monomial_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(coefficients, padded index rows) as passed to compiled kernels."""
        return self.coefficients, self.indices

    def without_fast_paths(self) -> "PolynomialPotential":
        """Copy using only the monomial evaluation (for cross-checks)."""
        p = PolynomialPotential(self.dim, [], name=self.name)
        p.degree = self.degree
        p.homogeneous = self.homogeneous
        p.coefficients = self.coefficients
        p.indices = self.indices
        return p


# -- discrete gradients ------------------------------------------------------


def kahan_gradient(U: PolynomialPotential, a, b) -> np.ndarray:
    """Kahan's two-point discrete gradient of a (at most) cubic potential.

    Returns ``-grad U(a)/2 + 2 grad U((a+b)/2) - grad U(b)/2``, which is
    affine in each argument when grad U is quadratic; on the diagonal a = b
    it reduces to grad U(a).
    """
    if U.degree > 3:
        raise ValueError(f"Kahan discrete gradient needs degree <= 3, got {U.degree}")
    a = as_vector(a, U.dim)
    b = as_vector(b, U.dim)
    return (-0.5 * U.gradient(a) + 2.0 * U.gradient(0.5 * (a + b))
            - 0.5 * U.gradient(b))


def avf_gradient(U: PolynomialPotential, a, b) -> np.ndarray:
    """Averaged-vector-field discrete gradient: int_0^1 grad U(s a + (1-s) b) ds.

    The integrand is polynomial of degree U.degree - 1, so Gauss-Legendre
    with ceil(degree / 2) nodes integrates it exactly.
    """
    a = as_vector(a, U.dim)
    b = as_vector(b, U.dim)
    m = max(1, math.ceil(U.degree / 2))
    nodes, weights = gauss_legendre_01(m)
    out = np.zeros(U.dim)
    for s, w in zip(nodes, weights):
        out += w * U.gradient(s * a + (1.0 - s) * b)
    return out


def polarized_gradient(U: PolynomialPotential, points) -> np.ndarray:
    """Symmetric multilinear polarization of grad U over k+1 points.

    For homogeneous U of degree k+2 the gradient is homogeneous of degree
    k+1; its polarization is the alternating sum over nonempty subsets S of
    the points of ``(-1)^(k+1-|S|)/(k+1)! * grad U(sum_S x_i)``.  Subsets
    are enumerated in increasing-bitmask order so the floating-point
    summation order is fixed.
    """
    points = [as_vector(p, U.dim) for p in points]
    k = len(points) - 1
    if k < 0:
        raise ValueError("need at least one point")
    if len(U.coefficients) == 0 and U.fast_gradient is None:
        return np.zeros(U.dim)
    if not U.homogeneous or U.degree != k + 2:
        raise ValueError(
            f"polarized gradient over {k + 1} points needs a homogeneous "
            f"potential of degree {k + 2}, got degree {U.degree} "
            f"(homogeneous={U.homogeneous})")
    total = np.zeros(U.dim)
    for mask in range(1, 1 << (k + 1)):
        s = np.zeros(U.dim)
        m = 0
        for i in range(k + 1):
            if mask & (1 << i):
                s += points[i]
                m += 1
        sign = -1.0 if (k + 1 - m) % 2 else 1.0
        total += sign * U.gradient(s)
    return total / math.factorial(k + 1)


def multilinear_form(U: PolynomialPotential, args) -> float:
    """Symmetric d-linear form of a homogeneous degree-d potential.

    Evaluated through the polarization identity
    ``(1/d!) sum_{S nonempty} (-1)^(d-|S|) U(sum_S x_i)`` over the d
    arguments; on the diagonal it returns U(x).
    """
    args = [as_vector(a, U.dim) for a in args]
    d = U.degree
    if not U.homogeneous:
        raise ValueError("multilinear form requires a homogeneous potential")
    if len(args) != d:
        raise ValueError(f"need exactly {d} arguments, got {len(args)}")
    if d == 0:
        return 0.0
    total = 0.0
    for r in range(1, d + 1):
        sign = -1.0 if (d - r) % 2 else 1.0
        for subset in combinations(range(d), r):
            s = np.zeros(U.dim)
            for i in subset:
                s += args[i]
            total += sign * U.value(s)
    return total / math.factorial(d)


def homogenize(U: PolynomialPotential) -> PolynomialPotential:
    """Homogenize U by an auxiliary variable prepended at index 0.

    Every monomial of total degree t is multiplied by the new variable to
    the power (degree - t), so the result is homogeneous of the same top
    degree and restricts back to U when the auxiliary slot is fixed at 1.
    Fast-path callbacks are dropped.
    """
    d = U.degree
    coeffs, idx = U.monomial_arrays()
    terms = []
    for c, row in zip(coeffs, idx):
        live = [int(i) + 1 for i in row if i >= 0]
        exps = [0] * (U.dim + 1)
        exps[0] = d - len(live)
        for i in live:
            exps[i] += 1
        terms.append((float(c), exps))
    return PolynomialPotential(U.dim + 1, terms,
                               name=(U.name + "_homogenized") if U.name else "")
