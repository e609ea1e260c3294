"""Pure-numpy stepping kernels (fallback backend).

Each stepper precomputes its exponential operators once for a fixed step
size and exposes ``step`` plus a bulk ``run`` used by the trajectory
driver.  The compiled backend in ``_kernels`` mirrors these semantics for
monomial-backed potentials.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse

from .linalg import SINGULARITY_RTOL
from .polynomial import gauss_legendre_01, kahan_gradient, polarized_gradient

__all__ = [
    "StepFailure",
    "PyExpEuler",
    "PyEKahan",
    "PyKahan",
    "PyEAVF",
    "PyCRK6",
    "PyPolarizedEKahan",
    "FIXED_POINT_TOL",
    "MAX_FIXED_POINT_ITERATIONS",
]

# Fixed-point settings: sup-norm update <= FIXED_POINT_TOL * (1 + |x_n|_inf).
FIXED_POINT_TOL = 1e-14
MAX_FIXED_POINT_ITERATIONS = 200


class StepFailure(RuntimeError):
    """A single step failed (singular step matrix or stalled iteration)."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def _cached_operators(sys, h):
    """exp(hA) and phi(hA), computed once per (system, h) pair."""
    ops = sys._op_cache.get(h)
    if ops is None:
        from .linalg import expm_phi1

        ops = expm_phi1(sys.A, h)
        sys._op_cache[h] = ops
    return ops


class _PyStepperBase:
    scheme = ""
    k = 1
    backend = "python"

    def __init__(self, sys, h):
        self.sys = sys
        self.h = float(h)
        self.last_iterations = 1
        self.last_residual = 0.0

    def step(self, x):
        raise NotImplementedError

    def run(self, x0, n_out, substeps=1, states=None, iterations=None, residuals=None):
        """Advance n_out output steps (each ``substeps`` internal steps).

        Returns the filled ``states`` array of shape (n_out + 1, dim); the
        stepper's own h is the internal substep.  Raises StepFailure from
        the failing internal step.
        """
        x = np.asarray(x0, dtype=float).copy()
        if states is None:
            states = np.empty((n_out + 1, x.size))
        states[0] = x
        for i in range(1, n_out + 1):
            iters = 0
            resid = 0.0
            for _ in range(substeps):
                try:
                    x = self.step(x)
                except StepFailure as exc:
                    exc.completed_steps = i - 1
                    raise
                iters += self.last_iterations
                resid = max(resid, self.last_residual)
            states[i] = x
            if iterations is not None:
                iterations[i - 1] = iters
            if residuals is not None:
                residuals[i - 1] = resid
        return states


def _solve_step_matrix(S, rhs, what):
    """LU solve of an internally assembled step matrix, pivot-checked.

    Same singularity semantics as linalg.solve_linear, minus the input
    revalidation (S and rhs are freshly computed here).
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(S, check_finite=False)
    scale = max(float(S.max()), -float(S.min()))
    if scale == 0.0 or np.abs(lu.diagonal()).min() < SINGULARITY_RTOL * scale:
        raise StepFailure(f"{what}: singular step matrix")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def _left_multiply_t(WT, H):
    """W @ H from the contiguous transpose WT, H dense or scipy-sparse.

    Returns a C-contiguous array (LU factorization is markedly faster on
    C-order input).
    """
    if scipy.sparse.issparse(H):
        return np.ascontiguousarray((H.T @ WT).T)
    return np.ascontiguousarray((np.asarray(H).T @ WT).T)


class PyExpEuler(_PyStepperBase):
    """Exponential Euler: x1 = exp(hA) x + h phi(hA) f(x).  Explicit."""

    scheme = "exp_euler"

    def __init__(self, sys, h):
        super().__init__(sys, h)
        self.expAh, self.phiAh = _cached_operators(sys, self.h)
        self._hP = self.h * self.phiAh

    def step(self, x):
        self.last_iterations = 1
        self.last_residual = 0.0
        return self.expAh @ x + self._hP @ self.sys.nonlinear_field(x)


class PyEKahan(_PyStepperBase):
    """Exponential integrator with Kahan's discretization of the nonlinearity.

    For quadratic f the Kahan combination equals f(x) + f'(x) (x1 - x)/2,
    so the update solves the single linear system

        (I - h/2 phi(hA) Q U''(x)) d = h phi(hA) (A x + Q grad U(x)),

    with x1 = x + d.  Requires a potential of degree <= 3.
    """

    scheme = "ekahan"

    def __init__(self, sys, h):
        super().__init__(sys, h)
        if sys.potential.degree > 3:
            raise ValueError("ekahan needs a potential of degree <= 3; "
                             "use the k-step polarized variant for higher degree")
        self.expAh, self.phiAh = _cached_operators(sys, self.h)
        self._PQT = np.ascontiguousarray((self.phiAh @ sys.Q).T)

    def step(self, x):
        sys = self.sys
        h = self.h
        n = sys.dim
        g = sys.A @ x + sys.Q @ sys.potential.gradient(x)
        S = _left_multiply_t(self._PQT, sys.potential.hessian_matrix(x))
        S *= -0.5 * h
        S.flat[:: n + 1] += 1.0
        rhs = h * (self.phiAh @ g)
        delta = _solve_step_matrix(S, rhs, "ekahan")
        self.last_iterations = 1
        r = S @ delta - rhs
        self.last_residual = float(np.abs(r).max() / (np.abs(rhs).max() + 1e-300))
        return x + delta


class PyKahan(_PyStepperBase):
    """Kahan's method: midpoint on the linear part, Kahan combination on f.

    The implicit relation is affine in x1 because the Kahan discrete
    gradient of a cubic potential satisfies
    ``kahan_gradient(U, x, y) = U''(x) y / 2 + kahan_gradient(U, x, 0)``,
    so one LU solve per step suffices.
    """

    scheme = "kahan"

    def __init__(self, sys, h):
        super().__init__(sys, h)
        if sys.potential.degree > 3:
            raise ValueError("kahan needs a potential of degree <= 3")
        self._S0 = np.eye(sys.dim) - 0.5 * self.h * sys.A
        self._QT = np.ascontiguousarray(sys.Q.T)
        self._zero = np.zeros(sys.dim)

    def step(self, x):
        sys = self.sys
        h = self.h
        c = kahan_gradient(sys.potential, x, self._zero)
        S = _left_multiply_t(self._QT, sys.potential.hessian_matrix(x))
        S *= -0.5 * h
        S += self._S0
        rhs = x + (0.5 * h) * (sys.A @ x) + h * (sys.Q @ c)
        x1 = _solve_step_matrix(S, rhs, "kahan")
        self.last_iterations = 1
        r = S @ x1 - rhs
        self.last_residual = float(np.abs(r).max() / (np.abs(rhs).max() + 1e-300))
        return x1


class _PyFixedPointBase(_PyStepperBase):
    def __init__(self, sys, h, tol=FIXED_POINT_TOL, max_iterations=MAX_FIXED_POINT_ITERATIONS):
        super().__init__(sys, h)
        self.tol = float(tol)
        self.max_iterations = int(max_iterations)

    def _tolerance(self, x):
        return self.tol * (1.0 + float(np.abs(x).max(initial=0.0)))


class PyEAVF(_PyFixedPointBase):
    """Exponential averaged-vector-field method (fully implicit).

    x1 = exp(hA) x + h phi(hA) Q int_0^1 grad U(s x + (1-s) x1) ds, the
    integral evaluated exactly by Gauss-Legendre; solved by fixed-point
    iteration to ``tol * (1 + |x|_inf)``.
    """

    scheme = "eavf"

    def __init__(self, sys, h, **kw):
        super().__init__(sys, h, **kw)
        self.expAh, self.phiAh = _cached_operators(sys, self.h)
        self._hPQ = self.h * (self.phiAh @ sys.Q)
        m = max(1, -(-sys.potential.degree // 2))  # ceil(degree / 2)
        self._nodes, self._weights = gauss_legendre_01(m)

    def step(self, x):
        sys = self.sys
        tol = self._tolerance(x)
        base = self.expAh @ x
        y = base + self._hPQ @ sys.potential.gradient(x)  # exponential Euler predictor
        diff = np.inf
        for it in range(self.max_iterations):
            if not np.all(np.isfinite(y)):
                raise StepFailure("eavf: fixed point diverged to a non-finite state",
                                  residual=diff)
            with np.errstate(over="ignore", invalid="ignore"):
                integral = np.zeros(sys.dim)
                for s, w in zip(self._nodes, self._weights):
                    integral += w * sys.potential.gradient(s * x + (1.0 - s) * y)
                y_new = base + self._hPQ @ integral
                diff = float(np.abs(y_new - y).max())
            y = y_new
            if diff <= tol:
                self.last_iterations = it + 1
                self.last_residual = diff
                return y
        raise StepFailure(
            f"eavf: fixed point stalled after {self.max_iterations} iterations "
            f"(last update {diff:.3e}, tol {tol:.3e})", residual=diff)


# Cubic interpolation basis of the three-stage continuous RK scheme:
# nodes 0, 1/3, 2/3, 1.
def _crk6_basis(s):
    return np.array([
        -(3 * s - 1) * (3 * s - 2) * (s - 1) / 2,
        3 * s * (3 * s - 2) * (3 * s - 3) / 2,
        -3 * s * (3 * s - 1) * (3 * s - 3) / 2,
        s * (3 * s - 1) * (3 * s - 2) / 2,
    ])


def _crk6_stage_weights(s):
    return np.array([
        37.0 / 27.0 - 32.0 / 9.0 * s + 20.0 / 9.0 * s * s,
        26.0 / 27.0 + 8.0 / 9.0 * s - 20.0 / 9.0 * s * s,
        1.0,
    ])


class PyCRK6(_PyFixedPointBase):
    """Sixth-order continuous-stage Runge-Kutta reference solver.

    Three coupled stage equations with a cubic interpolant of the stage
    polynomial; stage integrals are evaluated by 5-point Gauss-Legendre
    quadrature and the coupled system is solved by fixed-point iteration.
    """

    scheme = "crk6"
    n_quad = 5

    def __init__(self, sys, h, **kw):
        super().__init__(sys, h, **kw)
        nodes, weights = gauss_legendre_01(self.n_quad)
        self._B = np.stack([_crk6_basis(s) for s in nodes])          # (5, 4)
        self._W = np.stack([w * _crk6_stage_weights(s)
                            for s, w in zip(nodes, weights)], axis=1)  # (3, 5)

    def step(self, y):
        sys = self.sys
        h = self.h
        tol = self._tolerance(y)
        stages = np.stack([y, y, y])
        diff = np.inf
        for it in range(self.max_iterations):
            if not np.all(np.isfinite(stages)):
                raise StepFailure("crk6: fixed point diverged to a non-finite state",
                                  residual=diff)
            with np.errstate(over="ignore", invalid="ignore"):
                nodes_states = self._B @ np.vstack([y[None, :], stages])   # (5, n)
                grads = np.stack([sys.grad_energy(nodes_states[q])
                                  for q in range(self.n_quad)])
                integrals = self._W @ grads                                # (3, n)
                new_stages = y[None, :] + h * (integrals @ sys.Q.T)
                diff = float(np.abs(new_stages - stages).max())
            stages = new_stages
            if diff <= tol:
                self.last_iterations = it + 1
                self.last_residual = diff
                return stages[2].copy()
        raise StepFailure(
            f"crk6: fixed point stalled after {self.max_iterations} iterations "
            f"(last update {diff:.3e}, tol {tol:.3e})", residual=diff)


class PyPolarizedEKahan(_PyStepperBase):
    """k-step exponential integrator from the polarized discrete gradient.

    For homogeneous U of degree k+2 the update is

        x_{n+k} = exp(khA) x_n + kh phi(khA) Q P(x_n, ..., x_{n+k}),

    with P the symmetric (k+1)-linear polarization of grad U.  P is affine
    in its last slot, so the step reduces to one linear solve; the operator
    of that solve is assembled by probing the last slot with basis vectors.
    """

    scheme = "ekahan_kstep"

    def __init__(self, sys, h, k):
        super().__init__(sys, h)
        U = sys.potential
        trivial = len(U.coefficients) == 0 and U.fast_gradient is None
        if not trivial and (not U.homogeneous or U.degree != k + 2):
            raise ValueError(
                f"k-step scheme with k={k} needs a homogeneous potential of "
                f"degree {k + 2}, got degree {U.degree} (homogeneous={U.homogeneous})")
        self.k = int(k)
        kh = self.k * self.h
        self.expAh, self.phiAh = _cached_operators(sys, kh)
        self._khPQ = kh * (self.phiAh @ sys.Q)
        self._eye = np.eye(sys.dim)
        self._zero = np.zeros(sys.dim)

    def step_window(self, window):
        """Produce x_{n+k} from the k previous states x_n ... x_{n+k-1}."""
        sys = self.sys
        U = sys.potential
        window = [np.asarray(w, dtype=float) for w in window]
        if len(window) != self.k:
            raise ValueError(f"need a window of {self.k} states, got {len(window)}")
        c = polarized_gradient(U, window + [self._zero])
        n = sys.dim
        L = np.empty((n, n))
        probe = self._zero.copy()
        for j in range(n):
            probe[j] = 1.0
            L[:, j] = polarized_gradient(U, window + [probe]) - c
            probe[j] = 0.0
        S = self._eye - self._khPQ @ L
        rhs = self.expAh @ window[0] + self._khPQ @ c
        x_new = _solve_step_matrix(S, rhs, "ekahan_kstep")
        self.last_iterations = 1
        r = S @ x_new - rhs
        self.last_residual = float(np.abs(r).max() / (np.abs(rhs).max() + 1e-300))
        return x_new
