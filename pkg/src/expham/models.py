"""Benchmark systems: Henon-Heiles, FPU lattice waves, and a 2-D KdV-type
(Zakharov-Kuznetsov) semidiscretization.

Each constructor returns ``(system, x0)`` with the default parameters used
by the experiment harness.  All potentials carry both an exact monomial
form (used by the compiled kernels and the polarization oracles) and
vectorized fast paths.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse

from .polynomial import PolynomialPotential
from .system import SemilinearSystem

__all__ = ["henon_heiles", "fpu", "zk", "MODELS", "model_info"]


def henon_heiles() -> tuple[SemilinearSystem, np.ndarray]:
    """Planar stellar-motion model with cubic potential.

    State (q1, q2, p1, p2), canonical skew Q, M = I, and
    U = q1^2 q2 - q2^3 / 3; initial state (0, -0.082, 0, 0).
    """
    Q = np.zeros((4, 4))
    Q[0, 2] = Q[1, 3] = 1.0
    Q[2, 0] = Q[3, 1] = -1.0
    M = np.eye(4)
    U = PolynomialPotential(4, [
        (1.0, (2, 1, 0, 0)),
        (-1.0 / 3.0, (0, 3, 0, 0)),
    ], name="henon_heiles")
    x0 = np.array([0.0, -0.082, 0.0, 0.0])
    return SemilinearSystem(Q, M, U, name="henon_heiles"), x0


def _dirichlet_second_difference(n: int, dx: float) -> np.ndarray:
    D = np.zeros((n, n))
    idx = np.arange(n)
    D[idx, idx] = -2.0
    D[idx[:-1], idx[:-1] + 1] = 1.0
    D[idx[1:], idx[1:] - 1] = 1.0
    return D / dx**2


def _fpu_initial_profile(j, t, alpha):
    """Two-soliton profile q_j(t) (log-ratio of shifted logistics)."""
    q = np.zeros_like(j, dtype=float)
    for k in (32, 96):
        num = np.log1p(np.exp(2.0 * (alpha * (j - k) + t * math.sinh(alpha))))
        den = np.log1p(np.exp(2.0 * (alpha * (j - k - 1) + t * math.sinh(alpha))))
        q += num - den
    return 5.0 * q


def _fpu_initial_velocity(j, alpha):
    """d/dt of the profile at t = 0 (difference of logistic sigmoids)."""
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    v = np.zeros_like(j, dtype=float)
    for k in (32, 96):
        v += sig(2.0 * alpha * (j - k)) - sig(2.0 * alpha * (j - k - 1))
    return 5.0 * 2.0 * math.sinh(alpha) * v


def fpu(p: int = 1, beta: float = 0.0, gamma: float = 0.0, m: float = 0.0,
        eps: float | None = None, L: float = 128.0, dx: float = 1.0,
        alpha: float = 0.1) -> tuple[SemilinearSystem, np.ndarray]:
    """Lattice wave system with nearest-neighbour polynomial coupling.

    The continuum equation u_tt = beta u_txx + u_xx (1 + eps u_x^p)
    - gamma u_t - m^2 u on [0, L] with homogeneous Dirichlet ends is
    discretized by central second differences on N = L/dx intervals
    (interior nodes only), with

        Q = [[0, I], [-I, beta D - gamma I]],
        M = [[m^2 I - D, 0], [0, I]],
        U(y) = sum_j eps / ((p+1)(p+2)) ((u_{j+1} - u_j)/dx)^(p+2),

    ghost values u_0 = u_N = 0.  p = 1 gives a cubic potential (default
    eps = 3/4), p = 2 a quartic one (default eps = 100).  gamma (external)
    and beta (internal) damping make Q non-skew and the system dissipative.
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    if dx <= 0:
        raise ValueError("dx must be positive")
    if beta < 0 or gamma < 0:
        raise ValueError("damping coefficients must be nonnegative")
    if eps is None:
        eps = 0.75 if p == 1 else 100.0
    if eps <= 0:
        raise ValueError("eps must be positive")
    N = int(round(L / dx))
    if N < 3:
        raise ValueError("need at least 3 grid intervals")
    n = N - 1  # interior nodes per field
    D = _dirichlet_second_difference(n, dx)
    I = np.eye(n)
    Z = np.zeros((n, n))
    Q = np.block([[Z, I], [-I, beta * D - gamma * I]])
    M = np.block([[m**2 * I - D, Z], [Z, I]])

    q = p + 2
    c = eps / ((p + 1) * (p + 2) * dx**q)

    # exact monomials of sum_j c (u_{j+1} - u_j)^q over vars u_1..u_{N-1}
    terms = []
    for j in range(N):
        # interval j: right node j+1 (var j), left node j (var j-1); ghosts drop out
        for r in range(q + 1):
            coeff = c * math.comb(q, r) * (-1.0) ** r
            e = [0] * (2 * n)
            if j < n:       # right-end power q-r on var j
                e[j] += q - r
            elif q - r > 0:
                continue
            if j - 1 >= 0 and j - 1 < n:
                e[j - 1] += r
            elif r > 0:
                continue
            terms.append((coeff, e))

    def _u(y):
        return y[:n]

    def fast_value(y):
        d = np.diff(_u(y), prepend=0.0, append=0.0)
        return c * np.sum(d**q)

    def fast_gradient(y):
        d = np.diff(_u(y), prepend=0.0, append=0.0)
        dp = d ** (q - 1)
        g = np.zeros(2 * n)
        g[:n] = c * q * (dp[:-1] - dp[1:])
        return g

    def fast_hess(y):
        d = np.diff(_u(y), prepend=0.0, append=0.0)
        dp = d ** (q - 2)
        s = c * q * (q - 1)
        main = np.zeros(2 * n)
        main[:n] = s * (dp[:-1] + dp[1:])
        off = np.zeros(2 * n - 1)
        off[:n - 1] = -s * dp[1:n]
        return scipy.sparse.diags([off, main, off], [-1, 0, 1], format="csr")

    U = PolynomialPotential(2 * n, terms, fast_value=fast_value,
                            fast_gradient=fast_gradient, fast_hess_matrix=fast_hess,
                            name=f"fpu_p{p}")
    j = np.arange(1, N)
    x0 = np.concatenate([_fpu_initial_profile(j, 0.0, alpha),
                         _fpu_initial_velocity(j, alpha)])
    name = f"fpu_p{p}" + (f"_beta{beta:g}" if beta else "") + \
        (f"_gamma{gamma:g}" if gamma else "")
    return SemilinearSystem(Q, M, U, name=name), x0


def _periodic_central_first(n: int, dx: float) -> np.ndarray:
    C = np.zeros((n, n))
    idx = np.arange(n)
    C[idx, (idx + 1) % n] = 1.0
    C[idx, (idx - 1) % n] = -1.0
    return C / (2.0 * dx)


def _periodic_second(n: int, dx: float) -> np.ndarray:
    C = np.full((n, n), 0.0)
    idx = np.arange(n)
    C[idx, idx] = -2.0
    C[idx, (idx + 1) % n] = 1.0
    C[idx, (idx - 1) % n] = 1.0
    return C / dx**2


def zk(L: float = 6.0, N: int = 33, p: int = 1) -> tuple[SemilinearSystem, np.ndarray]:
    """Periodic 2-D semidiscretization of u_t + u u_x + u_xxx + u_xyy = 0.

    Unknowns sit at the (N-1)^2 periodic nodes with dx = dy = L/(N-1) and
    are flattened y-fastest (index = i*(N-1) + j).  With first/second
    central differences D1, D2 the dynamics are

        udot = -D1_x (u^2 / 2 + D2_x u + D2_y u),

    written as Q (M u + grad U(u)) with Q = -D1_x / (dx dy),
    M = dx dy (D2_x + D2_y) and U(u) = dx dy sum u^3 / 6.  Note the
    conserved quantity H = u^T M u / 2 + U carries the cubic term with the
    + sign of the discrete energy density and the quadratic term with the
    sign forced by that splitting.
    """
    if p != 1:
        raise ValueError("only the quadratic-nonlinearity case p = 1 is supported")
    if N < 5:
        raise ValueError("need at least N = 5 grid points")
    n = N - 1
    dx = L / n
    cell = dx * dx
    C1 = _periodic_central_first(n, dx)
    C2 = _periodic_second(n, dx)
    I = np.eye(n)
    Q = -np.kron(C1, I) / cell
    M = cell * (np.kron(C2, I) + np.kron(I, C2))

    dim = n * n

    def exps(kk):
        e = [0] * dim
        e[kk] = 3
        return e

    terms = [(cell / 6.0, exps(kk)) for kk in range(dim)]

    def fast_value(u):
        return cell * np.sum(u**3) / 6.0

    def fast_gradient(u):
        return cell * u * u / 2.0

    def fast_hess(u):
        return scipy.sparse.diags(cell * u, format="csr")

    U = PolynomialPotential(dim, terms, fast_value=fast_value,
                            fast_gradient=fast_gradient, fast_hess_matrix=fast_hess,
                            name="zk")

    xs = np.arange(n) * dx
    fx = np.sqrt(2.0) * (np.sin(2 * np.pi * xs / L)
                         + np.cos(4 * np.pi * xs / L + np.pi / 4) / np.sqrt(2.0))
    fy = (np.cos(2 * np.pi * xs / L)
          + np.cos(4 * np.pi * xs / L + np.pi / 3) / np.sqrt(2.0))
    x0 = np.outer(fx, fy).reshape(-1)  # x index slow, y fastest
    return SemilinearSystem(Q, M, U, name="zk"), x0


MODELS = {
    "henon_heiles": henon_heiles,
    "fpu": fpu,
    "zk": zk,
}


def model_info() -> list[dict]:
    """Summaries for the CLI model listing."""
    return [
        {"model": "henon_heiles", "dim": 4,
         "defaults": "T=100, h=0.02/2^i (i=0..4)"},
        {"model": "fpu", "dim": "2(L/dx - 1)",
         "defaults": "p=1 eps=3/4 (p=2 eps=100), m=0, L=128, dx=1, "
                     "T=100, h=1/2^i (i=1..4)"},
        {"model": "zk", "dim": "(N-1)^2",
         "defaults": "L=6, N=33, T=8, h=0.01/2^(i+1) (i=1..4)"},
    ]
