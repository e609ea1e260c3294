# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernels (hot path of the integrators).

One stepper instance packs a monomial-backed system into flat arrays at
construction; per-step work (polynomial gradients, sparse Hessian assembly
into the step matrix, matvecs, LU solves, fixed-point sweeps) then runs
through BLAS/LAPACK with no per-step allocation.  Semantics mirror the
pure-numpy backend in ``_pykernels``.
"""

import numpy as np

from libc.math cimport fabs

from scipy.linalg.cython_blas cimport daxpy, dcopy, dgemv
from scipy.linalg.cython_lapack cimport dgetrf, dgetrs

from ._pykernels import (FIXED_POINT_TOL, MAX_FIXED_POINT_ITERATIONS,
                         StepFailure, _cached_operators, _crk6_basis,
                         _crk6_stage_weights)
from .linalg import SINGULARITY_RTOL
from .polynomial import gauss_legendre_01

_SCHEME_IDS = {"exp_euler": 0, "ekahan": 1, "kahan": 2, "eavf": 3, "crk6": 4}

STATUS_OK = 0
STATUS_SINGULAR = 1
STATUS_NO_CONVERGENCE = 2

cdef int _SMALL_N = 16


def _hessian_pairs(coeffs, idx):
    """Group second-derivative contributions by matrix entry.

    Returns (pair_i, pair_j, pair_ptr, red_coeff, red_idx): for the p-th
    unique Hessian entry (i, j), rows pair_ptr[p]:pair_ptr[p+1] of
    red_coeff/red_idx hold the monomials (coefficient and remaining
    variable indices, -1 padded) whose product at x gives H_ij(x).
    """
    width = idx.shape[1]
    redw = max(width - 2, 1)
    groups = {}
    for t in range(idx.shape[0]):
        live = [int(v) for v in idx[t] if v >= 0]
        d = len(live)
        for a in range(d):
            for b in range(d):
                if a == b:
                    continue
                key = (live[a], live[b])
                rest = [live[s] for s in range(d) if s != a and s != b]
                groups.setdefault(key, []).append((float(coeffs[t]), rest))
    pair_i, pair_j, ptr, rc, ri = [], [], [0], [], []
    for key in sorted(groups):
        pair_i.append(key[0])
        pair_j.append(key[1])
        for c, rest in groups[key]:
            rc.append(c)
            row = list(rest) + [-1] * (redw - len(rest))
            ri.append(row)
        ptr.append(len(rc))
    return (np.asarray(pair_i, dtype=np.int32),
            np.asarray(pair_j, dtype=np.int32),
            np.asarray(ptr, dtype=np.int32),
            np.asarray(rc, dtype=float),
            np.asarray(ri, dtype=np.int32).reshape(len(rc), redw))


cdef class CompiledStepper:
    """One-step integrator over a dense monomial-backed system."""

    cdef readonly object sys
    cdef readonly str scheme
    cdef readonly double h
    cdef readonly str backend
    cdef readonly int k
    cdef public long last_iterations
    cdef public double last_residual
    cdef readonly object expAh, phiAh

    cdef int scheme_id, n, max_iter
    cdef double fp_tol, sing_rtol
    cdef double[:, ::1] A, Q, M, E, P, PQ, QT, PQT
    cdef double[::1, :] S0f, If, Sf, Sc
    cdef double[::1] coeffs
    cdef int[:, ::1] midx
    cdef int width, nterms
    cdef int npairs, redw
    cdef int[::1] pair_i, pair_j, pair_ptr
    cdef double[::1] red_coeff
    cdef int[:, ::1] red_idx
    cdef double[::1] grad, g, rhs, sol, tmp, g0, base, ycur, ynew, pt, integral
    cdef double[:, ::1] z, znew, integ
    cdef double[:, ::1] quadw  # (m, 2): node, weight
    cdef double[:, ::1] crkB, crkW
    cdef int[::1] ipiv
    cdef double[:, ::1] _cur_nxt

    def __init__(self, sys, scheme, double h, double fp_tol=FIXED_POINT_TOL,
                 int max_iter=MAX_FIXED_POINT_ITERATIONS):
        if scheme not in _SCHEME_IDS:
            raise ValueError(f"unsupported scheme {scheme!r}")
        U = sys.potential
        if scheme in ("ekahan", "kahan") and U.degree > 3:
            raise ValueError(f"{scheme} needs a potential of degree <= 3")
        self.sys = sys
        self.scheme = scheme
        self.scheme_id = _SCHEME_IDS[scheme]
        self.h = h
        self.k = 1
        self.backend = "compiled"
        self.fp_tol = fp_tol
        self.max_iter = max_iter
        self.sing_rtol = SINGULARITY_RTOL
        self.last_iterations = 1
        self.last_residual = 0.0

        n = sys.dim
        self.n = n
        self.A = np.ascontiguousarray(sys.A)
        self.Q = np.ascontiguousarray(sys.Q)
        self.M = np.ascontiguousarray(sys.M)
        self.QT = np.ascontiguousarray(sys.Q.T)

        coeffs, midx = U.monomial_arrays()
        self.coeffs = np.ascontiguousarray(coeffs, dtype=float)
        self.midx = np.ascontiguousarray(midx, dtype=np.int32)
        self.nterms = midx.shape[0]
        self.width = midx.shape[1]

        if scheme in ("exp_euler", "ekahan", "eavf"):
            E, P = _cached_operators(sys, h)
            self.expAh, self.phiAh = E, P
            self.E = np.ascontiguousarray(E)
            self.P = np.ascontiguousarray(P)
            PQ = P @ sys.Q
            self.PQ = np.ascontiguousarray(PQ)
            self.PQT = np.ascontiguousarray(PQ.T)
        else:
            self.expAh = self.phiAh = None
            zero2 = np.zeros((1, 1))
            self.E = zero2
            self.P = zero2
            self.PQ = zero2
            self.PQT = zero2

        if scheme in ("ekahan", "kahan"):
            pi, pj, ptr, rc, ri = _hessian_pairs(np.asarray(coeffs), np.asarray(midx))
            self.pair_i, self.pair_j, self.pair_ptr = pi, pj, ptr
            self.red_coeff, self.red_idx = rc, ri
            self.npairs = pi.shape[0]
            self.redw = ri.shape[1] if ri.size else 1
            self.Sf = np.empty((n, n), order="F")
            self.Sc = np.empty((n, n), order="F")
            self.ipiv = np.zeros(n, dtype=np.intc)
            self.If = np.asfortranarray(np.eye(n))
            if scheme == "kahan":
                self.S0f = np.asfortranarray(np.eye(n) - 0.5 * h * sys.A)
                self.g0 = U.without_fast_paths().gradient(np.zeros(n))
            else:
                self.S0f = self.If
                self.g0 = np.zeros(n)
        else:
            self.npairs = 0
            self.redw = 1
            empty_i = np.zeros(0, dtype=np.int32)
            self.pair_i = empty_i
            self.pair_j = empty_i
            self.pair_ptr = np.zeros(1, dtype=np.int32)
            self.red_coeff = np.zeros(0)
            self.red_idx = np.zeros((0, 1), dtype=np.int32)
            one_f = np.zeros((1, 1), order="F")
            self.Sf = one_f
            self.Sc = one_f
            self.S0f = one_f
            self.If = one_f
            self.ipiv = np.zeros(1, dtype=np.intc)
            self.g0 = np.zeros(n)

        if scheme == "eavf":
            m = max(1, -(-U.degree // 2))
            nodes, weights = gauss_legendre_01(m)
            self.quadw = np.ascontiguousarray(np.stack([nodes, weights], axis=1))
        else:
            self.quadw = np.zeros((0, 2))

        if scheme == "crk6":
            nodes, weights = gauss_legendre_01(5)
            self.crkB = np.ascontiguousarray(np.stack([_crk6_basis(s) for s in nodes]))
            self.crkW = np.ascontiguousarray(
                np.stack([w * _crk6_stage_weights(s)
                          for s, w in zip(nodes, weights)], axis=1))
            self.z = np.empty((3, n))
            self.znew = np.empty((3, n))
            self.integ = np.empty((3, n))
        else:
            self.crkB = np.zeros((0, 4))
            self.crkW = np.zeros((3, 0))
            self.z = np.zeros((3, 1))
            self.znew = np.zeros((3, 1))
            self.integ = np.zeros((3, 1))

        self.grad = np.empty(n)
        self.g = np.empty(n)
        self.rhs = np.empty(n)
        self.sol = np.empty(n)
        self.tmp = np.empty(n)
        self.base = np.empty(n)
        self.ycur = np.empty(n)
        self.ynew = np.empty(n)
        self.pt = np.empty(n)
        self.integral = np.empty(n)
        self._cur_nxt = np.empty((2, n))

    # -- small BLAS helpers (matrices stored C-order; BLAS sees the transpose).
    # Below _SMALL_N the BLAS/LAPACK call overhead dominates the arithmetic,
    # so plain loops are used instead; all schemes share these helpers.

    cdef void _gemv(self, double[:, ::1] Ac, double alpha, double* x,
                    double beta, double* y):
        cdef char trans = b'T'
        cdef int one = 1, n = self.n
        cdef Py_ssize_t i, j
        cdef double acc
        if n <= _SMALL_N:
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += Ac[i, j] * x[j]
                y[i] = alpha * acc + (beta * y[i] if beta != 0.0 else 0.0)
            return
        dgemv(&trans, &n, &n, &alpha, &Ac[0, 0], &n, x, &one, &beta, y, &one)

    cdef void _axpy(self, double a, double* x, double* y):
        cdef int one = 1, n = self.n
        cdef Py_ssize_t i
        if n <= _SMALL_N:
            for i in range(n):
                y[i] += a * x[i]
            return
        daxpy(&n, &a, x, &one, y, &one)

    cdef void _copy(self, double* x, double* y):
        cdef int one = 1, n = self.n
        cdef Py_ssize_t i
        if n <= _SMALL_N:
            for i in range(n):
                y[i] = x[i]
            return
        dcopy(&n, x, &one, y, &one)

    # -- monomial evaluation ---------------------------------------------------

    cdef void _grad_u(self, double* x, double* out, bint zero_first):
        cdef Py_ssize_t t, r, s, i
        cdef int vr, vs
        cdef double prod
        if zero_first:
            for i in range(self.n):
                out[i] = 0.0
        for t in range(self.nterms):
            for r in range(self.width):
                vr = self.midx[t, r]
                if vr < 0:
                    break
                prod = self.coeffs[t]
                for s in range(self.width):
                    vs = self.midx[t, s]
                    if vs < 0:
                        break
                    if s != r:
                        prod *= x[vs]
                out[vr] += prod

    cdef void _subtract_hessian(self, double[:, ::1] WT, double* x, double alpha,
                                double[::1, :] S):
        """S[:, j] -= alpha * H_ij(x) * W[:, i] over the Hessian sparsity."""
        cdef Py_ssize_t p, kk, s
        cdef int i, j, v, one = 1, n = self.n
        cdef double val, prod, a
        cdef Py_ssize_t r
        for p in range(self.npairs):
            val = 0.0
            for kk in range(self.pair_ptr[p], self.pair_ptr[p + 1]):
                prod = self.red_coeff[kk]
                for s in range(self.redw):
                    v = self.red_idx[kk, s]
                    if v < 0:
                        break
                    prod *= x[v]
                val += prod
            if val != 0.0:
                i = self.pair_i[p]
                j = self.pair_j[p]
                a = -alpha * val
                if n <= _SMALL_N:
                    for r in range(n):
                        S[r, j] += a * WT[i, r]
                else:
                    daxpy(&n, &a, &WT[i, 0], &one, &S[0, j], &one)

    # -- shared pieces -----------------------------------------------------------

    cdef int _solve_small(self, double* b):
        """Gaussian elimination with partial pivoting, n <= _SMALL_N."""
        cdef Py_ssize_t i, j, k, p
        cdef int n = self.n
        cdef double smax = 0.0, v, f, acc
        for j in range(n):
            for i in range(n):
                self.Sc[i, j] = self.Sf[i, j]
                v = fabs(self.Sf[i, j])
                if v > smax:
                    smax = v
        if smax == 0.0:
            return STATUS_SINGULAR
        for k in range(n):
            p = k
            v = fabs(self.Sf[k, k])
            for i in range(k + 1, n):
                if fabs(self.Sf[i, k]) > v:
                    v = fabs(self.Sf[i, k])
                    p = i
            if v < self.sing_rtol * smax:
                return STATUS_SINGULAR
            if p != k:
                for j in range(n):
                    f = self.Sf[k, j]
                    self.Sf[k, j] = self.Sf[p, j]
                    self.Sf[p, j] = f
                f = b[k]
                b[k] = b[p]
                b[p] = f
            for i in range(k + 1, n):
                f = self.Sf[i, k] / self.Sf[k, k]
                for j in range(k + 1, n):
                    self.Sf[i, j] -= f * self.Sf[k, j]
                b[i] -= f * b[k]
        for k in range(n - 1, -1, -1):
            acc = b[k]
            for j in range(k + 1, n):
                acc -= self.Sf[k, j] * b[j]
            b[k] = acc / self.Sf[k, k]
        return STATUS_OK

    cdef int _solve(self, double* b):
        """Factor Sf in place and solve into b; Sc keeps a copy for the residual."""
        cdef int info = 0, one = 1, n = self.n
        cdef Py_ssize_t i, j
        cdef double smax = 0.0, dmin, v
        cdef int nn = n * n
        cdef char no = b'N'
        if n <= _SMALL_N:
            return self._solve_small(b)
        dcopy(&nn, &self.Sf[0, 0], &one, &self.Sc[0, 0], &one)
        for j in range(n):
            for i in range(n):
                v = fabs(self.Sf[i, j])
                if v > smax:
                    smax = v
        dgetrf(&n, &n, &self.Sf[0, 0], &n, &self.ipiv[0], &info)
        if info != 0:
            return STATUS_SINGULAR
        dmin = fabs(self.Sf[0, 0])
        for i in range(1, n):
            v = fabs(self.Sf[i, i])
            if v < dmin:
                dmin = v
        if smax == 0.0 or dmin < self.sing_rtol * smax:
            return STATUS_SINGULAR
        dgetrs(&no, &n, &one, &self.Sf[0, 0], &n, &self.ipiv[0], b, &n, &info)
        if info != 0:
            return STATUS_SINGULAR
        return STATUS_OK

    cdef double _solve_residual(self, double* sol, double* rhs):
        """max|Sc sol - rhs| / max|rhs| with Sc the pre-factor copy."""
        cdef char no = b'N'
        cdef int one = 1, n = self.n
        cdef double a = 1.0, b = 0.0
        cdef Py_ssize_t i, j
        cdef double num = 0.0, den = 0.0, v, acc
        if n <= _SMALL_N:
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += self.Sc[i, j] * sol[j]
                self.tmp[i] = acc
        else:
            dgemv(&no, &n, &n, &a, &self.Sc[0, 0], &n, sol, &one, &b,
                  &self.tmp[0], &one)
        for i in range(n):
            v = fabs(self.tmp[i] - rhs[i])
            if v > num:
                num = v
            v = fabs(rhs[i])
            if v > den:
                den = v
        return num / (den + 1e-300)

    cdef double _supnorm(self, double* x):
        cdef Py_ssize_t i
        cdef double m = 0.0, v
        for i in range(self.n):
            v = fabs(x[i])
            if v > m:
                m = v
        return m

    # -- schemes ----------------------------------------------------------------

    cdef int _step_exp_euler(self, double* x, double* out):
        self._grad_u(x, &self.grad[0], True)
        self._gemv(self.Q, 1.0, &self.grad[0], 0.0, &self.tmp[0])
        self._gemv(self.E, 1.0, x, 0.0, out)
        self._gemv(self.P, self.h, &self.tmp[0], 1.0, out)
        self.last_iterations = 1
        self.last_residual = 0.0
        return STATUS_OK

    cdef void _copy_mat(self, double[::1, :] src, double[::1, :] dst):
        cdef int one = 1, nn = self.n * self.n
        cdef Py_ssize_t i, j
        if self.n <= _SMALL_N:
            for j in range(self.n):
                for i in range(self.n):
                    dst[i, j] = src[i, j]
            return
        dcopy(&nn, &src[0, 0], &one, &dst[0, 0], &one)

    cdef int _step_ekahan(self, double* x, double* out):
        self._grad_u(x, &self.grad[0], True)
        self._gemv(self.A, 1.0, x, 0.0, &self.g[0])
        self._gemv(self.Q, 1.0, &self.grad[0], 1.0, &self.g[0])
        self._gemv(self.P, self.h, &self.g[0], 0.0, &self.rhs[0])
        self._copy_mat(self.If, self.Sf)
        self._subtract_hessian(self.PQT, x, 0.5 * self.h, self.Sf)
        self._copy(&self.rhs[0], &self.sol[0])
        if self._solve(&self.sol[0]) != STATUS_OK:
            return STATUS_SINGULAR
        self.last_residual = self._solve_residual(&self.sol[0], &self.rhs[0])
        self.last_iterations = 1
        self._copy(x, out)
        self._axpy(1.0, &self.sol[0], out)
        return STATUS_OK

    cdef int _step_kahan(self, double* x, double* out):
        cdef int n = self.n
        cdef Py_ssize_t i
        # Kahan discrete gradient at (x, 0): -grad(x)/2 + 2 grad(x/2) - grad(0)/2
        for i in range(n):
            self.pt[i] = 0.5 * x[i]
        self._grad_u(x, &self.grad[0], True)
        self._grad_u(&self.pt[0], &self.tmp[0], True)
        for i in range(n):
            self.g[i] = -0.5 * self.grad[i] + 2.0 * self.tmp[i] - 0.5 * self.g0[i]
        self._copy(x, &self.rhs[0])
        self._gemv(self.A, 0.5 * self.h, x, 1.0, &self.rhs[0])
        self._gemv(self.Q, self.h, &self.g[0], 1.0, &self.rhs[0])
        self._copy_mat(self.S0f, self.Sf)
        self._subtract_hessian(self.QT, x, 0.5 * self.h, self.Sf)
        self._copy(&self.rhs[0], &self.sol[0])
        if self._solve(&self.sol[0]) != STATUS_OK:
            return STATUS_SINGULAR
        self.last_residual = self._solve_residual(&self.sol[0], &self.rhs[0])
        self.last_iterations = 1
        self._copy(&self.sol[0], out)
        return STATUS_OK

    cdef int _step_eavf(self, double* x, double* out):
        cdef Py_ssize_t i, q, it
        cdef int nq = self.quadw.shape[0]
        cdef double tol = self.fp_tol * (1.0 + self._supnorm(x))
        cdef double s, w, v
        cdef double diff = 0.0
        self._gemv(self.E, 1.0, x, 0.0, &self.base[0])
        self._grad_u(x, &self.grad[0], True)
        self._gemv(self.Q, 1.0, &self.grad[0], 0.0, &self.tmp[0])
        self._copy(&self.base[0], &self.ycur[0])
        self._gemv(self.P, self.h, &self.tmp[0], 1.0, &self.ycur[0])
        for it in range(self.max_iter):
            for i in range(self.n):
                self.integral[i] = 0.0
            for q in range(nq):
                s = self.quadw[q, 0]
                w = self.quadw[q, 1]
                for i in range(self.n):
                    self.pt[i] = s * x[i] + (1.0 - s) * self.ycur[i]
                self._grad_u(&self.pt[0], &self.grad[0], True)
                self._axpy(w, &self.grad[0], &self.integral[0])
            self._copy(&self.base[0], &self.ynew[0])
            self._gemv(self.PQ, self.h, &self.integral[0], 1.0, &self.ynew[0])
            diff = 0.0
            for i in range(self.n):
                v = fabs(self.ynew[i] - self.ycur[i])
                if v > diff or v != v:  # propagate nan as non-convergence
                    diff = v
            self._copy(&self.ynew[0], &self.ycur[0])
            if diff != diff:
                self.last_residual = diff
                return STATUS_NO_CONVERGENCE
            if diff <= tol:
                self.last_iterations = it + 1
                self.last_residual = diff
                self._copy(&self.ycur[0], out)
                return STATUS_OK
        self.last_residual = diff
        return STATUS_NO_CONVERGENCE

    cdef int _step_crk6(self, double* y, double* out):
        cdef Py_ssize_t i, q, it, kk
        cdef double tol = self.fp_tol * (1.0 + self._supnorm(y))
        cdef double v
        cdef double diff = 0.0
        for kk in range(3):
            self._copy(y, &self.z[kk, 0])
        for it in range(self.max_iter):
            for kk in range(3):
                for i in range(self.n):
                    self.integ[kk, i] = 0.0
            for q in range(5):
                for i in range(self.n):
                    self.pt[i] = self.crkB[q, 0] * y[i]
                for kk in range(3):
                    self._axpy(self.crkB[q, kk + 1], &self.z[kk, 0], &self.pt[0])
                self._gemv(self.M, 1.0, &self.pt[0], 0.0, &self.grad[0])
                self._grad_u(&self.pt[0], &self.grad[0], False)
                for kk in range(3):
                    self._axpy(self.crkW[kk, q], &self.grad[0], &self.integ[kk, 0])
            diff = 0.0
            for kk in range(3):
                self._copy(y, &self.znew[kk, 0])
                self._gemv(self.Q, self.h, &self.integ[kk, 0], 1.0, &self.znew[kk, 0])
                for i in range(self.n):
                    v = fabs(self.znew[kk, i] - self.z[kk, i])
                    if v > diff or v != v:  # propagate nan as non-convergence
                        diff = v
                self._copy(&self.znew[kk, 0], &self.z[kk, 0])
            if diff != diff:
                self.last_residual = diff
                return STATUS_NO_CONVERGENCE
            if diff <= tol:
                self.last_iterations = it + 1
                self.last_residual = diff
                self._copy(&self.z[2, 0], out)
                return STATUS_OK
        self.last_residual = diff
        return STATUS_NO_CONVERGENCE

    cdef int _step(self, double* x, double* out):
        if self.scheme_id == 0:
            return self._step_exp_euler(x, out)
        elif self.scheme_id == 1:
            return self._step_ekahan(x, out)
        elif self.scheme_id == 2:
            return self._step_kahan(x, out)
        elif self.scheme_id == 3:
            return self._step_eavf(x, out)
        return self._step_crk6(x, out)

    def _raise(self, int status):
        if status == STATUS_SINGULAR:
            raise StepFailure(f"{self.scheme}: singular step matrix")
        raise StepFailure(
            f"{self.scheme}: fixed point stalled after {self.max_iter} iterations "
            f"(last update {self.last_residual:.3e})",
            residual=self.last_residual)

    def step(self, x):
        """Advance one step (allocating); raises StepFailure on failure."""
        x = np.ascontiguousarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise ValueError(f"state has length {x.shape[0]}, expected {self.n}")
        out = np.empty(self.n)
        cdef double[::1] xv = x
        cdef double[::1] ov = out
        cdef int status = self._step(&xv[0], &ov[0])
        if status != STATUS_OK:
            self._raise(status)
        return out

    def run(self, x0, int n_out, int substeps=1, states=None, iterations=None,
            residuals=None):
        """Fill ``states`` with n_out output rows of ``substeps`` internal steps."""
        x0 = np.ascontiguousarray(x0, dtype=float)
        if states is None:
            states = np.empty((n_out + 1, self.n))
        cdef double[:, ::1] st = states
        cdef double[:, ::1] buf = self._cur_nxt
        cdef long[::1] itv = iterations if iterations is not None else None
        cdef double[::1] rsv = residuals if residuals is not None else None
        cdef double[::1] x0v = x0
        cdef Py_ssize_t i, s
        cdef int status
        cdef long iters
        cdef double rmax
        cdef int cur = 0
        self._copy(&x0v[0], &buf[0, 0])
        self._copy(&x0v[0], &st[0, 0])
        for i in range(1, n_out + 1):
            iters = 0
            rmax = 0.0
            for s in range(substeps):
                status = self._step(&buf[cur, 0], &buf[1 - cur, 0])
                if status != STATUS_OK:
                    err_steps = i - 1
                    try:
                        self._raise(status)
                    except StepFailure as exc:
                        exc.completed_steps = err_steps
                        raise
                cur = 1 - cur
                iters += self.last_iterations
                if self.last_residual > rmax:
                    rmax = self.last_residual
            self._copy(&buf[cur, 0], &st[i, 0])
            if itv is not None:
                itv[i - 1] = iters
            if rsv is not None:
                rsv[i - 1] = rmax
        return states
