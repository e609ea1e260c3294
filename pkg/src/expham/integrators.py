"""Time integrators and the trajectory driver.

Schemes
-------
``exp_euler``     explicit exponential Euler (first order, not symmetric)
``ekahan``        exponential integrator + Kahan discretization; one linear
                  solve per step, symmetric, second order (cubic potentials)
``kahan``         plain Kahan / midpoint on the linear part (no exponential)
``eavf``          exponential averaged-vector-field method (fully implicit,
                  preserves the discrete energy exactly)
``crk6``          sixth-order continuous-stage RK reference solver
``ekahan_kstep``  k-step generalization of ekahan to homogeneous potentials
                  of degree k+2, via the polarized discrete gradient

Two backends implement the one-step schemes: a compiled extension
(``expham._kernels``) used for monomial-backed potentials when available,
and the pure-numpy fallback in ``_pykernels``.  Selection happens at
stepper construction; ``EXPHAM_BACKEND`` (``auto``/``python``/``compiled``)
overrides the default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels
from ._pykernels import (FIXED_POINT_TOL, MAX_FIXED_POINT_ITERATIONS,
                         StepFailure)
from .linalg import as_vector

try:
    from . import _kernels
except ImportError:  # extension not built; pure-python fallback only
    _kernels = None

__all__ = [
    "SCHEMES",
    "ONE_STEP_SCHEMES",
    "StepFailure",
    "IntegrationError",
    "Trajectory",
    "make_stepper",
    "integrate",
    "have_compiled_backend",
    "default_backend",
]

ONE_STEP_SCHEMES = ("exp_euler", "ekahan", "kahan", "eavf", "crk6")
SCHEMES = ONE_STEP_SCHEMES + ("ekahan_kstep",)

_PY_CLASSES = {
    "exp_euler": _pykernels.PyExpEuler,
    "ekahan": _pykernels.PyEKahan,
    "kahan": _pykernels.PyKahan,
    "eavf": _pykernels.PyEAVF,
    "crk6": _pykernels.PyCRK6,
}


def have_compiled_backend() -> bool:
    return _kernels is not None


def default_backend() -> str:
    """Resolve the backend choice from the environment (default: auto)."""
    return os.environ.get("EXPHAM_BACKEND", "auto").lower()


class IntegrationError(RuntimeError):
    """A step failed mid-trajectory; carries the partial result."""

    def __init__(self, message, trajectory, step_index):
        super().__init__(message)
        self.trajectory = trajectory
        self.step_index = step_index


@dataclass
class Trajectory:
    """Uniformly spaced states with per-step solver metadata."""

    times: np.ndarray
    states: np.ndarray
    scheme: str
    h: float
    iterations: np.ndarray | None = None
    residuals: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dt = np.diff(self.times)
        if dt.size and (np.any(dt <= 0) or
                        np.abs(dt - dt[0]).max() > 1e-9 * max(abs(dt[0]), 1e-300)):
            raise ValueError("trajectory times must be strictly increasing and uniform")

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def state(self, n) -> np.ndarray:
        return self.states[n]


def _compiled_eligible(sys, scheme) -> bool:
    # the compiled kernels evaluate the potential from its monomials; a
    # callback-only potential (no terms) must stay on the python backend
    U = sys.potential
    has_monomials = len(U.coefficients) > 0 or (
        U.fast_value is None and U.fast_gradient is None
        and U.fast_hess_matrix is None)
    return _kernels is not None and scheme in ONE_STEP_SCHEMES and has_monomials


def make_stepper(sys, scheme, h, *, k=1, backend=None,
                 fixed_point_tol=FIXED_POINT_TOL,
                 max_iterations=MAX_FIXED_POINT_ITERATIONS):
    """Build a stepper with its exponential operators precomputed.

    ``backend`` is ``auto`` (compiled when available and the scheme
    supports it), ``python``, or ``compiled``; the EXPHAM_BACKEND
    environment variable supplies the default.
    """
    if backend is None:
        backend = default_backend()
    if backend not in ("auto", "python", "compiled"):
        raise ValueError(f"unknown backend {backend!r}")
    if scheme == "ekahan_kstep":
        if backend == "compiled":
            raise RuntimeError("ekahan_kstep runs on the python backend only")
        return _pykernels.PyPolarizedEKahan(sys, h, k)
    if scheme not in ONE_STEP_SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")

    if backend == "compiled" or (backend == "auto" and _compiled_eligible(sys, scheme)):
        if _kernels is None:
            raise RuntimeError("compiled backend requested but expham._kernels "
                               "is not built")
        try:
            return _kernels.CompiledStepper(
                sys, scheme, float(h), float(fixed_point_tol), int(max_iterations))
        except Exception:
            if backend == "compiled":
                raise
    cls = _PY_CLASSES[scheme]
    if scheme in ("eavf", "crk6"):
        return cls(sys, h, tol=fixed_point_tol, max_iterations=max_iterations)
    return cls(sys, h)


def _resolve_steps(h, T, n_steps):
    if n_steps is None:
        if T is None:
            raise ValueError("give either T or n_steps")
        n_steps = int(round(T / h))
        if abs(n_steps * h - T) > 1e-8 * max(abs(T), h):
            raise ValueError(f"T={T} is not an integer multiple of h={h}")
    return int(n_steps)


def _starter_states(sys, x0, h, count, substeps, fixed_point_tol, max_iterations):
    """Extra initial states for k-step schemes, from the reference solver.

    The reference substep is halved (a few times if needed) when its fixed
    point fails to contract at the requested step size.
    """
    attempts = substeps
    for _ in range(12):
        try:
            stepper = make_stepper(sys, "crk6", h / attempts,
                                   fixed_point_tol=fixed_point_tol,
                                   max_iterations=max_iterations)
            states = np.empty((count + 1, sys.dim))
            stepper.run(x0, count, substeps=attempts, states=states)
            return [states[i].copy() for i in range(1, count + 1)]
        except StepFailure:
            attempts *= 2
    raise StepFailure(f"starter: reference solver failed down to substep {h / attempts}")


def integrate(sys, scheme, x0, h, T=None, n_steps=None, *, substeps=1, k=1,
              starter="crk6", starter_substeps=8, backend=None,
              fixed_point_tol=FIXED_POINT_TOL,
              max_iterations=MAX_FIXED_POINT_ITERATIONS) -> Trajectory:
    """Integrate from x0 over N = T/h uniform output steps.

    ``scheme`` is a scheme name or a prebuilt stepper (so operator
    precompute can be timed/reused separately).  ``substeps`` inserts that
    many internal steps of size h/substeps per output step (used for
    reference trajectories).  k-step schemes take their k-1 extra starting
    states from ``starter``: the reference solver by default, or an
    explicit array of states.

    Step failures raise :class:`IntegrationError` carrying the partial
    trajectory and the failing output-step index.
    """
    x0 = as_vector(x0, sys.dim)
    h = float(h)
    n_steps = _resolve_steps(h, T, n_steps)
    if isinstance(scheme, str):
        stepper = make_stepper(sys, scheme, h / substeps if scheme != "ekahan_kstep" else h,
                               k=k, backend=backend, fixed_point_tol=fixed_point_tol,
                               max_iterations=max_iterations)
    else:
        stepper = scheme
    name = stepper.scheme
    times = np.arange(n_steps + 1) * h
    states = np.empty((n_steps + 1, sys.dim))
    iterations = np.zeros(n_steps, dtype=np.int64)
    residuals = np.zeros(n_steps)

    if name == "ekahan_kstep":
        if substeps != 1:
            raise ValueError("substeps are not supported for k-step schemes")
        kk = stepper.k
        if n_steps < kk - 1:
            raise ValueError(f"need at least {kk - 1} steps for a {kk}-step scheme")
        states[0] = x0
        if kk > 1:
            if isinstance(starter, str):
                if starter != "crk6":
                    raise ValueError(f"unknown starter {starter!r}")
                extra = _starter_states(sys, x0, h, kk - 1, starter_substeps,
                                        fixed_point_tol, max_iterations)
            else:
                extra = [as_vector(s, sys.dim) for s in starter]
                if len(extra) != kk - 1:
                    raise ValueError(f"starter must supply {kk - 1} states")
            for i, s in enumerate(extra, start=1):
                states[i] = s
        for n in range(n_steps - kk + 1):
            try:
                states[n + kk] = stepper.step_window(states[n:n + kk])
            except StepFailure as exc:
                partial = Trajectory(times[:n + kk], states[:n + kk].copy(), name, h)
                raise IntegrationError(f"step {n + kk} failed: {exc}",
                                       partial, n + kk) from exc
            iterations[n + kk - 1] = stepper.last_iterations
            residuals[n + kk - 1] = stepper.last_residual
        return Trajectory(times, states, name, h, iterations, residuals,
                          meta={"k": kk})

    try:
        stepper.run(x0, n_steps, substeps=substeps, states=states,
                    iterations=iterations, residuals=residuals)
    except StepFailure as exc:
        done = getattr(exc, "completed_steps", 0)
        partial = Trajectory(times[:done + 1], states[:done + 1].copy(), name, h)
        raise IntegrationError(f"step {done + 1} failed: {exc}", partial,
                               done + 1) from exc
    return Trajectory(times, states, name, h, iterations, residuals,
                      meta={"substeps": substeps, "backend": stepper.backend})
