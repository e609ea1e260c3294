"""Error metrics and exact per-step energy identities.

The two-point identity (for any exponential integrator of the form
``x1 = exp(hA) x + h phi(hA) Q g(x, x1)`` on a conservative system)

    x1^T M x1 / 2 - x^T M x / 2 + (x1 - x)^T g(x, x1) = 0

holds to rounding, as does the per-step energy deviation of the Kahan
variant on homogeneous cubic potentials,

    H(x1) - H(x) = U(x1 - x),

and its k-step generalization through the symmetric multilinear form of
U.  These are used as machine-precision oracles on integrator output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_vector
from .polynomial import multilinear_form

__all__ = [
    "GridMismatchError",
    "global_error",
    "energy_deviation_cubic",
    "energy_deviation_kstep",
    "quadratic_identity_residual",
    "kstep_quadratic_identity_residual",
    "kstep_discrete_energy",
    "convergence_slope",
    "EnergyReport",
    "build_energy_report",
    "drift_ratio",
]


class GridMismatchError(ValueError):
    """Trajectories do not share the same time grid."""


def global_error(traj, ref) -> float:
    """max_n || y_n - yref_n ||_2 over a shared time grid."""
    if len(traj.times) != len(ref.times) or (
            len(traj.times) and
            np.abs(traj.times - ref.times).max() > 1e-9 * max(1.0, abs(traj.times[-1]))):
        raise GridMismatchError("trajectories are on different time grids")
    diff = traj.states - ref.states
    return float(np.sqrt((diff * diff).sum(axis=1)).max())


def _require_conservative(sys):
    if not sys.conservative:
        raise ValueError("energy identities require a conservative system (skew Q)")


def energy_deviation_cubic(sys, x_n, x_n1) -> tuple[float, float, float]:
    """(actual, predicted, |actual - predicted|) for one Kahan-type step.

    actual = H(x_{n+1}) - H(x_n); predicted = U(x_{n+1} - x_n).  The match
    is exact (to rounding) only for states produced by the exponential
    Kahan scheme on a homogeneous cubic potential.
    """
    _require_conservative(sys)
    U = sys.potential
    if not U.homogeneous or U.degree != 3:
        raise ValueError("per-step deviation formula needs a homogeneous cubic potential")
    x_n = as_vector(x_n, sys.dim)
    x_n1 = as_vector(x_n1, sys.dim)
    actual = sys.energy(x_n1) - sys.energy(x_n)
    predicted = U.value(x_n1 - x_n)
    return actual, predicted, abs(actual - predicted)


def kstep_discrete_energy(sys, window) -> float:
    """Multi-step discrete energy over a window x_n ... x_{n+k-1}.

    H_n = (1/2k) sum_i x_{n+i}^T M x_{n+i}
          + Ubar(x_n, ..., x_{n+k-1}, x_n, x_{n+k-1})
    with Ubar the symmetric (k+2)-linear form of the homogeneous U.
    """
    U = sys.potential
    window = [as_vector(w, sys.dim) for w in window]
    k = len(window)
    if U.degree != k + 2:
        raise ValueError(f"window of {k} states needs potential degree {k + 2}")
    quad = sum(float(w @ (sys.M @ w)) for w in window) / (2.0 * k)
    return quad + multilinear_form(U, window + [window[0], window[-1]])


def energy_deviation_kstep(sys, window) -> tuple[float, float, float]:
    """(actual, predicted, residual) of the k-step energy deviation.

    ``window`` holds k+1 consecutive states x_n ... x_{n+k} produced by the
    k-step polarized scheme on a homogeneous potential of degree k+2.  The
    predicted deviation combines three evaluations of the symmetric
    multilinear form; actual is the difference of consecutive multi-step
    discrete energies.
    """
    _require_conservative(sys)
    U = sys.potential
    window = [as_vector(w, sys.dim) for w in window]
    k = len(window) - 1
    if k < 1 or not U.homogeneous or U.degree != k + 2:
        raise ValueError(
            f"window of {k + 1} states needs a homogeneous potential of degree {k + 2}")
    actual = (kstep_discrete_energy(sys, window[1:])
              - kstep_discrete_energy(sys, window[:-1]))
    first = multilinear_form(
        U, window[1:] + [window[k], window[1] - window[0]])
    second = multilinear_form(
        U, window[:-1] + [window[0], window[k] - window[k - 1]])
    third = multilinear_form(
        U, window + [(window[k] - window[0]) / k])
    predicted = first + second - 2.0 * third
    return actual, predicted, abs(actual - predicted)


def quadratic_identity_residual(sys, x_n, x_n1, discrete_gradient) -> float:
    """| x1^T M x1 / 2 - x^T M x / 2 + (x1 - x)^T ghat | for a given ghat.

    ``discrete_gradient`` is the scheme's two-point discrete gradient
    evaluated at (x_n, x_{n+1}); the identity vanishes for every
    exponential integrator driven by Q times such a gradient on a
    conservative system.
    """
    _require_conservative(sys)
    x_n = as_vector(x_n, sys.dim)
    x_n1 = as_vector(x_n1, sys.dim)
    g = as_vector(discrete_gradient, sys.dim)
    lhs = (0.5 * float(x_n1 @ (sys.M @ x_n1)) - 0.5 * float(x_n @ (sys.M @ x_n))
           + float((x_n1 - x_n) @ g))
    return abs(lhs)


def kstep_quadratic_identity_residual(sys, x_n, x_nk, k, discrete_gradient) -> float:
    """k-step version: |(1/2k)(x_nk^T M x_nk - x_n^T M x_n) + (1/k)(x_nk - x_n)^T ghat|."""
    _require_conservative(sys)
    x_n = as_vector(x_n, sys.dim)
    x_nk = as_vector(x_nk, sys.dim)
    g = as_vector(discrete_gradient, sys.dim)
    lhs = ((float(x_nk @ (sys.M @ x_nk)) - float(x_n @ (sys.M @ x_n))) / (2.0 * k)
           + float((x_nk - x_n) @ g) / k)
    return abs(lhs)


def convergence_slope(points) -> float:
    """Least-squares slope of log(error) against log(h).

    ``points`` is a sequence of (h, error) pairs with h strictly decreasing
    and positive errors; at least three points are required.
    """
    points = list(points)
    if len(points) < 3:
        raise ValueError("need at least 3 (h, error) points")
    h = np.array([p[0] for p in points], dtype=float)
    e = np.array([p[1] for p in points], dtype=float)
    if np.any(np.diff(h) >= 0):
        raise ValueError("step sizes must be strictly decreasing")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("step sizes and errors must be positive")
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


@dataclass
class EnergyReport:
    """Per-trajectory energy series and identity residuals.

    ``deviation_actual[n]`` is H_{n+1} - H_n (nan in the last row);
    predicted/residual follow the cubic per-step formula when available,
    else nan.
    """

    times: np.ndarray
    energies: np.ndarray
    energy_errors: np.ndarray
    deviation_actual: np.ndarray
    deviation_predicted: np.ndarray
    deviation_residual: np.ndarray

    def max_energy_error(self) -> float:
        return float(np.nanmax(self.energy_errors))


def drift_ratio(energy_errors) -> float:
    """max |E_H| over the second half divided by max over the first half.

    A bounded, oscillatory energy error keeps this ratio near 1; monotone
    drift pushes it well above.
    """
    e = np.abs(np.asarray(energy_errors, dtype=float))
    half = len(e) // 2
    if half < 1:
        raise ValueError("need at least two samples")
    first = e[:half].max()
    second = e[half:].max()
    return float(second / max(first, 1e-300))


def build_energy_report(sys, traj, reference_energies=None, predict=None, k=1):
    """Energy series for a trajectory.

    For conservative systems the energy error defaults to
    |H_n - H(x_0)| (exact invariance); pass ``reference_energies`` to
    compare against a reference trajectory instead.  ``predict`` enables
    the per-step deviation formula: "cubic" for the one-step scheme,
    "kstep" for the k-step variant.
    """
    n = len(traj.times)
    H = np.array([sys.energy(traj.states[i]) for i in range(n)])
    if reference_energies is not None:
        eh = np.abs(H - np.asarray(reference_energies, dtype=float))
    elif sys.conservative:
        eh = np.abs(H - H[0])
    else:
        eh = np.full(n, np.nan)
    actual = np.full(n, np.nan)
    predicted = np.full(n, np.nan)
    residual = np.full(n, np.nan)
    actual[:-1] = H[1:] - H[:-1]
    if predict == "cubic":
        for i in range(n - 1):
            a, p, r = energy_deviation_cubic(sys, traj.states[i], traj.states[i + 1])
            actual[i], predicted[i], residual[i] = a, p, r
    elif predict == "kstep":
        for i in range(n - k):
            a, p, r = energy_deviation_kstep(sys, traj.states[i:i + k + 1])
            actual[i], predicted[i], residual[i] = a, p, r
    elif predict is not None:
        raise ValueError(f"unknown prediction mode {predict!r}")
    return EnergyReport(traj.times.copy(), H, eh, actual, predicted, residual)
