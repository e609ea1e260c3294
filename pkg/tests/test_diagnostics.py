import numpy as np
import pytest

from expham.diagnostics import (EnergyReport, GridMismatchError,
                                build_energy_report, convergence_slope,
                                drift_ratio, energy_deviation_cubic,
                                energy_deviation_kstep, global_error,
                                kstep_discrete_energy,
                                kstep_quadratic_identity_residual,
                                quadratic_identity_residual)
from expham.integrators import Trajectory, integrate, make_stepper
from expham.models import fpu, henon_heiles
from expham.polynomial import avf_gradient, kahan_gradient

from conftest import random_conservative_cubic_system


def traj_of(states, h=1.0):
    states = np.asarray(states, dtype=float)
    times = np.arange(states.shape[0]) * h
    return Trajectory(times, states, "test", h)


class TestGlobalError:
    def test_identical_trajectories(self):
        t = traj_of(np.random.default_rng(0).normal(size=(5, 3)))
        assert global_error(t, t) == 0.0

    def test_unit_difference(self):
        a = traj_of(np.zeros((1, 3)))
        b = traj_of(np.array([[1.0, 0.0, 0.0]]))
        assert global_error(a, b) == 1.0

    def test_grid_mismatch_raises(self):
        a = traj_of(np.zeros((3, 2)), h=0.1)
        b = traj_of(np.zeros((3, 2)), h=0.2)
        with pytest.raises(GridMismatchError):
            global_error(a, b)
        c = traj_of(np.zeros((4, 2)), h=0.1)
        with pytest.raises(GridMismatchError):
            global_error(a, c)


class TestCubicDeviation:
    def test_equal_states_give_zero(self):
        sys, x0 = henon_heiles()
        assert energy_deviation_cubic(sys, x0, x0) == (0.0, 0.0, 0.0)

    def test_holds_along_ekahan_steps(self):
        sys, x0 = henon_heiles()
        traj = integrate(sys, "ekahan", x0, 0.02, n_steps=500)
        H = [sys.energy(s) for s in traj.states]
        for i in range(traj.n_steps):
            _, _, res = energy_deviation_cubic(sys, traj.states[i], traj.states[i + 1])
            assert res <= 1e-13 * (1.0 + abs(H[i]))

    def test_generic_pair_violates_identity(self, rng):
        # the identity is specific to the scheme, not to arbitrary state pairs
        sys, _ = henon_heiles()
        a, b = rng.normal(size=4), rng.normal(size=4)
        _, _, res = energy_deviation_cubic(sys, a, b)
        assert res > 1e-8

    def test_requires_conservative_cubic(self, rng):
        sysd, x0 = fpu(p=1, gamma=0.1)
        with pytest.raises(ValueError):
            energy_deviation_cubic(sysd, x0, x0)
        sysq, xq = fpu(p=2, L=16.0)
        with pytest.raises(ValueError):
            energy_deviation_cubic(sysq, xq, xq)


class TestKStepDeviation:
    def test_stationary_window_gives_zero(self):
        sys, x0 = fpu(p=2, L=16.0)
        window = [x0, x0, x0]
        a, p, r = energy_deviation_kstep(sys, window)
        assert a == 0.0 and abs(p) < 1e-12 and r < 1e-12

    def test_k1_reduces_to_cubic_identity(self):
        sys, x0 = henon_heiles()
        traj = integrate(sys, "ekahan", x0, 0.02, n_steps=20)
        for i in range(traj.n_steps):
            a1, p1, _ = energy_deviation_cubic(sys, traj.states[i], traj.states[i + 1])
            a2, p2, _ = energy_deviation_kstep(sys, traj.states[i:i + 2])
            assert abs(a1 - a2) < 1e-14
            assert abs(p1 - p2) < 1e-13

    def test_k1_discrete_energy_is_plain_energy(self):
        sys, x0 = henon_heiles()
        assert abs(kstep_discrete_energy(sys, [x0]) - sys.energy(x0)) < 1e-15

    def test_holds_along_polarized_steps(self):
        sys, x0 = fpu(p=2, L=16.0)
        traj = integrate(sys, "ekahan_kstep", x0, 0.25, n_steps=20, k=2)
        for i in range(traj.n_steps - 1):
            window = traj.states[i:i + 3]
            Hn = kstep_discrete_energy(sys, window[:2])
            _, _, res = energy_deviation_kstep(sys, window)
            assert res <= 1e-11 * (1.0 + abs(Hn))

    def test_window_degree_mismatch(self):
        sys, x0 = henon_heiles()
        with pytest.raises(ValueError):
            energy_deviation_kstep(sys, [x0, x0, x0])  # k=2 needs quartic


class TestQuadraticIdentity:
    def test_equal_states_exactly_zero(self, rng):
        sys, _ = henon_heiles()
        x = rng.normal(size=4)
        assert quadratic_identity_residual(sys, x, x, rng.normal(size=4)) == 0.0

    def test_ekahan_step_satisfies_identity(self):
        sys, x0 = henon_heiles()
        st = make_stepper(sys, "ekahan", 0.02)
        x1 = st.step(x0)
        ghat = kahan_gradient(sys.potential, x0, x1)
        H0 = sys.energy(x0)
        assert quadratic_identity_residual(sys, x0, x1, ghat) <= 1e-11 * (1 + abs(H0))

    def test_eavf_step_satisfies_identity(self):
        sys, x0 = henon_heiles()
        st = make_stepper(sys, "eavf", 0.02)
        x1 = st.step(x0)
        ghat = avf_gradient(sys.potential, x0, x1)
        H0 = sys.energy(x0)
        assert quadratic_identity_residual(sys, x0, x1, ghat) <= 1e-11 * (1 + abs(H0))

    def test_exp_euler_violates_identity(self):
        # not of the two-point discrete-gradient form: residual is generic
        sys, x0 = henon_heiles()
        st = make_stepper(sys, "exp_euler", 0.1)
        x1 = st.step(x0)
        ghat = kahan_gradient(sys.potential, x0, x1)
        assert quadratic_identity_residual(sys, x0, x1, ghat) > 1e-9

    def test_kstep_variant(self, rng):
        sys, _ = henon_heiles()
        x = rng.normal(size=4)
        assert kstep_quadratic_identity_residual(sys, x, x, 2, rng.normal(size=4)) == 0.0


class TestConvergenceSlope:
    def test_exact_second_order(self):
        hs = [0.1, 0.05, 0.025, 0.0125]
        pts = [(h, 3.7 * h**2) for h in hs]
        assert abs(convergence_slope(pts) - 2.0) < 1e-12

    def test_exact_first_order(self):
        hs = [0.1, 0.05, 0.025]
        pts = [(h, 0.4 * h) for h in hs]
        assert abs(convergence_slope(pts) - 1.0) < 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            convergence_slope([(0.1, 1.0), (0.05, 0.5)])
        with pytest.raises(ValueError):
            convergence_slope([(0.1, 1.0), (0.2, 0.5), (0.05, 0.2)])
        with pytest.raises(ValueError):
            convergence_slope([(0.1, 1.0), (0.05, -0.5), (0.025, 0.2)])


class TestEnergyReport:
    def test_report_shapes_and_errors(self):
        sys, x0 = henon_heiles()
        traj = integrate(sys, "ekahan", x0, 0.02, n_steps=50)
        rep = build_energy_report(sys, traj, predict="cubic")
        assert rep.times.shape == (51,)
        assert rep.energies.shape == (51,)
        assert np.isnan(rep.deviation_actual[-1])
        assert np.nanmax(rep.deviation_residual) <= 1e-13 * (1 + np.abs(rep.energies).max())
        assert rep.max_energy_error() < 1e-6

    def test_nonconservative_needs_reference(self):
        sysd, x0 = fpu(p=1, gamma=0.1)
        traj = integrate(sysd, "ekahan", x0, 0.25, n_steps=4)
        rep = build_energy_report(sysd, traj)
        assert np.isnan(rep.energy_errors).all()
        ref_E = rep.energies.copy()
        rep2 = build_energy_report(sysd, traj, reference_energies=ref_E)
        assert np.abs(rep2.energy_errors).max() == 0.0

    def test_drift_ratio_flags_monotone_growth(self):
        bounded = np.abs(np.sin(np.linspace(0, 20, 200))) + 0.1
        drifting = np.exp(np.linspace(0.0, 5.0, 200))
        assert drift_ratio(bounded) <= 2.0
        assert drift_ratio(drifting) > 2.0

    def test_kstep_report(self):
        sys, x0 = fpu(p=2, L=16.0)
        traj = integrate(sys, "ekahan_kstep", x0, 0.25, n_steps=10, k=2)
        rep = build_energy_report(sys, traj, predict="kstep", k=2)
        assert np.nanmax(rep.deviation_residual) <= 1e-10
