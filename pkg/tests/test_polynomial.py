import itertools
import math

import numpy as np
import pytest

from expham.polynomial import (PolynomialPotential, avf_gradient, homogenize,
                               kahan_gradient, multilinear_form,
                               polarized_gradient)

from conftest import random_cubic_potential


def hh_potential():
    return PolynomialPotential(4, [(1.0, (2, 1, 0, 0)), (-1.0 / 3.0, (0, 3, 0, 0))])


def random_homogeneous(dim, degree, rng, nterms=8, scale=0.5):
    terms = []
    for _ in range(nterms):
        e = [0] * dim
        for _ in range(degree):
            e[rng.integers(dim)] += 1
        terms.append((scale * rng.normal(), e))
    return PolynomialPotential(dim, terms)


def multilinear_bruteforce(U, args):
    """Independent oracle: permanent-style sum over monomial index multisets.

    For a monomial c * x_{i_1} ... x_{i_d} the symmetric d-linear form is
    (c/d!) sum over permutations s of prod_r args[s(r)][i_r].
    """
    d = U.degree
    total = 0.0
    for c, row in zip(U.coefficients, U.indices):
        live = [int(v) for v in row if v >= 0]
        assert len(live) == d
        for perm in itertools.permutations(range(d)):
            prod = c
            for r, p in enumerate(perm):
                prod *= args[p][live[r]]
            total += prod
    return total / math.factorial(d)


class TestConstruction:
    def test_degree_and_homogeneity(self):
        U = hh_potential()
        assert U.dim == 4 and U.degree == 3 and U.homogeneous

    def test_mixed_degree_not_homogeneous(self):
        U = PolynomialPotential(2, [(1.0, (2, 0)), (1.0, (3, 0))])
        assert U.degree == 3 and not U.homogeneous

    def test_duplicate_terms_merge(self):
        U = PolynomialPotential(1, [(1.0, (3,)), (2.0, (3,))])
        assert len(U.coefficients) == 1
        assert U.value(np.array([2.0])) == 24.0

    def test_cancelling_terms_drop(self):
        U = PolynomialPotential(1, [(1.0, (2,)), (-1.0, (2,))])
        assert len(U.coefficients) == 0 and U.degree == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            PolynomialPotential(2, [(1.0, (1,))])  # wrong multi-index length
        with pytest.raises(ValueError):
            PolynomialPotential(2, [(1.0, (-1, 2))])

    def test_zero_potential(self):
        U = PolynomialPotential.zero(3)
        x = np.ones(3)
        assert U.value(x) == 0.0
        assert np.array_equal(U.gradient(x), np.zeros(3))


class TestDerivatives:
    def test_value_henon_heiles(self):
        U = hh_potential()
        y = np.array([0.3, -0.2, 0.0, 0.0])
        assert abs(U.value(y) - (0.3**2 * -0.2 - (-0.2) ** 3 / 3.0)) < 1e-15

    def test_euler_identity_homogeneous(self, rng):
        # x . grad U(x) = d U(x) for homogeneous degree d
        for degree in (3, 4):
            U = random_homogeneous(5, degree, rng)
            for _ in range(5):
                x = rng.normal(size=5)
                lhs = float(x @ U.gradient(x))
                rhs = degree * U.value(x)
                assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(rhs))

    def test_cubic_hessian_identity(self, rng):
        # U(x) = x^T U''(x) x / 6 for homogeneous cubics
        U = random_homogeneous(4, 3, rng)
        for _ in range(5):
            x = rng.normal(size=4)
            lhs = float(x @ (U.hessian_matrix(x) @ x)) / 6.0
            assert abs(lhs - U.value(x)) <= 1e-12 * (1.0 + abs(U.value(x)))

    def test_gradient_matches_finite_differences(self, rng):
        U = random_cubic_potential(5, rng, homogeneous=False)
        x = rng.normal(size=5)
        g = U.gradient(x)
        eps = 1e-5
        for i in range(5):
            e = np.zeros(5)
            e[i] = eps
            fd = (U.value(x + e) - U.value(x - e)) / (2 * eps)
            assert abs(fd - g[i]) < 1e-8 * (1.0 + abs(g[i]))

    def test_hessian_matches_gradient_differences(self, rng):
        U = random_cubic_potential(4, rng, homogeneous=False)
        x = rng.normal(size=4)
        H = U.hessian_matrix(x)
        assert np.abs(H - H.T).max() < 1e-14
        eps = 1e-5
        for i in range(4):
            e = np.zeros(4)
            e[i] = eps
            fd = (U.gradient(x + e) - U.gradient(x - e)) / (2 * eps)
            assert np.abs(fd - H[:, i]).max() < 1e-8 * (1.0 + np.abs(H).max())

    def test_hessian_action(self, rng):
        U = random_cubic_potential(4, rng)
        x, v = rng.normal(size=4), rng.normal(size=4)
        assert np.allclose(U.hessian_action(x, v), U.hessian_matrix(x) @ v, atol=1e-14)


class TestKahanGradient:
    def test_diagonal_consistency(self, rng):
        U = hh_potential()
        x = rng.normal(size=4)
        assert np.abs(kahan_gradient(U, x, x) - U.gradient(x)).max() < 1e-14

    def test_homogeneous_cubic_closed_form(self, rng):
        # For homogeneous cubics the combination collapses to U''(b) a / 2.
        U = random_homogeneous(5, 3, rng)
        a, b = rng.normal(size=5), rng.normal(size=5)
        expected = 0.5 * (U.hessian_matrix(b) @ a)
        got = kahan_gradient(U, a, b)
        assert np.abs(got - expected).max() < 1e-12 * (1.0 + np.abs(expected).max())

    def test_bilinear_identity(self, rng):
        # equals [grad U(a+b) - grad U(a) - grad U(b)] / 2 for homogeneous cubics
        U = random_homogeneous(4, 3, rng)
        a, b = rng.normal(size=4), rng.normal(size=4)
        expected = 0.5 * (U.gradient(a + b) - U.gradient(a) - U.gradient(b))
        assert np.abs(kahan_gradient(U, a, b) - expected).max() < 1e-13

    def test_rejects_quartic(self, rng):
        U = random_homogeneous(3, 4, rng)
        with pytest.raises(ValueError):
            kahan_gradient(U, np.zeros(3), np.zeros(3))


class TestAvfGradient:
    def test_discrete_gradient_property(self, rng):
        # (a - b) . avf(a, b) = U(a) - U(b), exactly up to rounding
        for degree in (3, 4):
            U = random_homogeneous(4, degree, rng)
            a, b = rng.normal(size=4), rng.normal(size=4)
            lhs = float((a - b) @ avf_gradient(U, a, b))
            rhs = U.value(a) - U.value(b)
            assert abs(lhs - rhs) < 1e-13 * (1.0 + abs(rhs))

    def test_diagonal_consistency(self, rng):
        U = random_homogeneous(4, 4, rng)
        x = rng.normal(size=4)
        assert np.abs(avf_gradient(U, x, x) - U.gradient(x)).max() < 1e-13


class TestPolarizedGradient:
    def test_all_points_equal_reproduces_gradient(self, rng):
        for degree in (3, 4):
            U = random_homogeneous(5, degree, rng)
            x = rng.normal(size=5)
            got = polarized_gradient(U, [x] * (degree - 1))
            g = U.gradient(x)
            assert np.abs(got - g).max() <= 1e-11 * (1.0 + np.abs(g).max())

    def test_two_point_case_is_kahan(self, rng):
        U = random_homogeneous(4, 3, rng)
        a, b = rng.normal(size=4), rng.normal(size=4)
        got = polarized_gradient(U, [a, b])
        expected = kahan_gradient(U, a, b)
        assert np.abs(got - expected).max() < 1e-13

    def test_zero_slot_gives_zero(self, rng):
        U = random_homogeneous(4, 4, rng)
        x = rng.normal(size=4)
        got = polarized_gradient(U, [x, np.zeros(4), np.zeros(4)])
        assert np.abs(got).max() < 1e-13

    def test_permutation_symmetry(self, rng):
        U = random_homogeneous(4, 4, rng)
        pts = [rng.normal(size=4) for _ in range(3)]
        ref = polarized_gradient(U, pts)
        scale = 1.0 + np.abs(ref).max()
        for perm in itertools.permutations(range(3)):
            got = polarized_gradient(U, [pts[i] for i in perm])
            assert np.abs(got - ref).max() <= 1e-12 * scale

    def test_multilinearity(self, rng):
        U = random_homogeneous(4, 4, rng)
        a, b, u, v = (rng.normal(size=4) for _ in range(4))
        al, be = 0.7, -1.3
        lhs = polarized_gradient(U, [a, b, al * u + be * v])
        rhs = al * polarized_gradient(U, [a, b, u]) + be * polarized_gradient(U, [a, b, v])
        assert np.abs(lhs - rhs).max() <= 1e-11 * (1.0 + np.abs(rhs).max())

    def test_wrong_point_count_raises(self, rng):
        U = random_homogeneous(3, 3, rng)
        with pytest.raises(ValueError):
            polarized_gradient(U, [np.zeros(3)] * 3)


class TestMultilinearForm:
    def test_diagonal_gives_value(self, rng):
        for degree in (3, 4):
            U = random_homogeneous(4, degree, rng)
            x = rng.normal(size=4)
            got = multilinear_form(U, [x] * degree)
            assert abs(got - U.value(x)) <= 1e-12 * (1.0 + abs(U.value(x)))

    def test_zero_argument_gives_zero(self, rng):
        U = random_homogeneous(4, 3, rng)
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert abs(multilinear_form(U, [a, b, np.zeros(4)])) < 1e-14

    def test_symmetry_under_swaps(self, rng):
        U = random_homogeneous(5, 4, rng)
        args = [rng.normal(size=5) for _ in range(4)]
        ref = multilinear_form(U, args)
        for i, j in ((0, 1), (1, 3), (0, 3)):
            swapped = list(args)
            swapped[i], swapped[j] = swapped[j], swapped[i]
            assert abs(multilinear_form(U, swapped) - ref) <= 1e-12 * (1.0 + abs(ref))

    def test_against_permanent_bruteforce(self, rng):
        # independent oracle built from the monomial index multisets
        for dim, degree in ((4, 3), (6, 3), (4, 4), (6, 4)):
            U = random_homogeneous(dim, degree, rng)
            args = [rng.normal(size=dim) for _ in range(degree)]
            got = multilinear_form(U, args)
            expected = multilinear_bruteforce(U, args)
            assert abs(got - expected) <= 1e-11 * (1.0 + abs(expected))

    def test_wrong_arg_count_raises(self, rng):
        U = random_homogeneous(3, 3, rng)
        with pytest.raises(ValueError):
            multilinear_form(U, [np.zeros(3)] * 2)


class TestHomogenize:
    def test_scalar_mixed_degree(self):
        # U(x) = x^2 + x^3 -> Ubar(x0, x) = x0 x^2 + x^3 with Ubar(1, x) = U(x)
        U = PolynomialPotential(1, [(1.0, (2,)), (1.0, (3,))])
        Ub = homogenize(U)
        assert Ub.dim == 2 and Ub.degree == 3 and Ub.homogeneous
        for x in np.linspace(-2.0, 2.0, 9):
            assert abs(Ub.value(np.array([1.0, x])) - U.value(np.array([x]))) < 1e-13

    def test_already_homogeneous_cubic(self):
        U = PolynomialPotential(1, [(1.0, (3,))])
        Ub = homogenize(U)
        assert Ub.homogeneous and Ub.degree == 3
        x = np.array([0.5, -1.2])
        assert abs(Ub.value(x) - (-1.2) ** 3) < 1e-14

    def test_henon_heiles_unchanged_up_to_slot(self, rng):
        U = hh_potential()
        Ub = homogenize(U)
        y = rng.normal(size=4)
        assert abs(Ub.value(np.concatenate([[1.0], y])) - U.value(y)) < 1e-13
        # scaling the auxiliary slot has no effect on a homogeneous input's terms
        assert abs(Ub.value(np.concatenate([[2.0], y])) - U.value(y)) < 1e-13

    def test_gradient_restriction(self, rng):
        U = PolynomialPotential(2, [(0.4, (2, 0)), (1.0, (1, 2)), (-0.3, (0, 3))])
        Ub = homogenize(U)
        x = rng.normal(size=2)
        gb = Ub.gradient(np.concatenate([[1.0], x]))
        assert np.abs(gb[1:] - U.gradient(x)).max() < 1e-13
