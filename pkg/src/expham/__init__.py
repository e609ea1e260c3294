"""Structure-preserving exponential integrators for semilinear Hamiltonian
systems with polynomial nonlinearities.

The core scheme combines exact integration of the linear part (matrix
exponential and phi function) with Kahan's linearly implicit discretization
of the polynomial nonlinearity: one linear solve per step, symmetric,
second order, with a bounded oscillatory energy error that obeys an exact
per-step deviation identity.  Baselines (exponential Euler, plain Kahan,
the fully implicit exponential averaged-vector-field method) and a
sixth-order continuous-stage Runge-Kutta reference solver share the same
driver, diagnostics and experiment harness.
"""

from .diagnostics import (EnergyReport, build_energy_report, convergence_slope,
                          drift_ratio, energy_deviation_cubic,
                          energy_deviation_kstep, global_error,
                          kstep_quadratic_identity_residual,
                          quadratic_identity_residual)
from .integrators import (SCHEMES, IntegrationError, StepFailure, Trajectory,
                          have_compiled_backend, integrate, make_stepper)
from .linalg import (SingularMatrixError, matrix_exponential, phi1,
                     solve_linear)
from .models import fpu, henon_heiles, zk
from .polynomial import (PolynomialPotential, avf_gradient, homogenize,
                         kahan_gradient, multilinear_form, polarized_gradient)
from .system import SemilinearSystem

__version__ = "0.1.0"

__all__ = [
    "EnergyReport", "build_energy_report", "convergence_slope", "drift_ratio",
    "energy_deviation_cubic", "energy_deviation_kstep", "global_error",
    "kstep_quadratic_identity_residual", "quadratic_identity_residual",
    "SCHEMES", "IntegrationError", "StepFailure", "Trajectory",
    "have_compiled_backend", "integrate", "make_stepper",
    "SingularMatrixError", "matrix_exponential", "phi1", "solve_linear",
    "fpu", "henon_heiles", "zk",
    "PolynomialPotential", "avf_gradient", "homogenize", "kahan_gradient",
    "multilinear_form", "polarized_gradient",
    "SemilinearSystem",
    "__version__",
]
