# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Hermitian eigensolver and trajectory sampler.

Same algorithms and signatures as ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, hypot, copysign, log

cnp.import_array()

cdef int MAX_QL_SWEEPS = 60


cdef inline double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def householder_tridiag(a_in):
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] a = np.array(a_in, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] q = np.eye(n, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] v = np.zeros(n, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] w = np.zeros(n, dtype=np.complex128)
    cdef Py_ssize_t k, i, j, m
    cdef double alpha, vn, ax0
    cdef double complex phase, acc
    for k in range(n - 2):
        m = n - k - 1
        alpha = 0.0
        for i in range(m):
            alpha += cabs2(a[k + 1 + i, k])
        alpha = sqrt(alpha)
        if alpha == 0.0:
            continue
        ax0 = sqrt(cabs2(a[k + 1, k]))
        if ax0 != 0.0:
            phase = a[k + 1, k] / ax0
        else:
            phase = 1.0
        for i in range(m):
            v[i] = a[k + 1 + i, k]
        v[0] = v[0] + phase * alpha
        vn = 0.0
        for i in range(m):
            vn += cabs2(v[i])
        vn = sqrt(vn)
        if vn == 0.0:
            continue
        for i in range(m):
            v[i] = v[i] / vn
        # rows: a[k+1:, :] -= 2 v (v^H a[k+1:, :])
        for j in range(n):
            acc = 0.0
            for i in range(m):
                acc = acc + v[i].conjugate() * a[k + 1 + i, j]
            w[j] = acc
        for i in range(m):
            for j in range(n):
                a[k + 1 + i, j] = a[k + 1 + i, j] - 2.0 * v[i] * w[j]
        # cols: a[:, k+1:] -= 2 (a[:, k+1:] v) v^H
        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc = acc + a[i, k + 1 + j] * v[j]
            w[i] = acc
        for i in range(n):
            for j in range(m):
                a[i, k + 1 + j] = a[i, k + 1 + j] - 2.0 * w[i] * v[j].conjugate()
        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc = acc + q[i, k + 1 + j] * v[j]
            w[i] = acc
        for i in range(n):
            for j in range(m):
                q[i, k + 1 + j] = q[i, k + 1 + j] - 2.0 * w[i] * v[j].conjugate()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e = np.zeros(max(n - 1, 0))
    cdef double complex ph = 1.0
    cdef double complex off
    for i in range(n):
        d[i] = a[i, i].real
    for j in range(n):
        q[j, 0] = q[j, 0] * ph
    for k in range(n - 1):
        off = a[k + 1, k]
        e[k] = sqrt(cabs2(off))
        if e[k] > 0.0:
            ph = ph * off / e[k]
        for j in range(n):
            q[j, k + 1] = q[j, k + 1] * ph
    return d, e, q


def tql_implicit(d_in, e_in, cnp.ndarray[cnp.complex128_t, ndim=2] z):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.array(d_in, dtype=np.float64, copy=True)
    cdef Py_ssize_t n = d.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ee = np.zeros(n)
    cdef Py_ssize_t l, m, i, k, it
    cdef double g, r, s, c, p, f, b, dd
    cdef double complex t0, t1
    cdef bint underflow
    for i in range(n - 1):
        ee[i] = e_in[i]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = fabs(d[m]) + fabs(d[m + 1])
                if fabs(ee[m]) <= 2.2e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > MAX_QL_SWEEPS:
                raise RuntimeError("QL iteration did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * ee[l])
            r = hypot(g, 1.0)
            g = d[m] - d[l] + ee[l] / (g + copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * ee[i]
                b = c * ee[i]
                r = hypot(f, g)
                ee[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    ee[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(z.shape[0]):
                    t1 = z[k, i + 1]
                    t0 = z[k, i]
                    z[k, i + 1] = s * t0 + c * t1
                    z[k, i] = c * t0 - s * t1
                i -= 1
            if underflow:
                continue
            d[l] -= p
            ee[l] = g
            ee[m] = 0.0
    return d


def tridiag_ql_eigh(a):
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[0]
    if n == 1:
        return a.real.diagonal().copy(), np.ones((1, 1), dtype=np.complex128)
    d, e, q = householder_tridiag(a)
    z = np.ascontiguousarray(q)
    w = tql_implicit(d, e, z)
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(z[:, order])


def sample_paths(s_ops_in, rho_vec_in, Py_ssize_t dim, uniforms_in):
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] s_ops = np.ascontiguousarray(s_ops_in, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] rho_vec = np.ascontiguousarray(rho_vec_in, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] uniforms = np.ascontiguousarray(uniforms_in, dtype=np.float64)
    cdef Py_ssize_t m = s_ops.shape[0]
    cdef Py_ssize_t big = s_ops.shape[1]
    cdef Py_ssize_t n_traj = uniforms.shape[0]
    cdef Py_ssize_t n = uniforms.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] labels = np.empty((n_traj, n), dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logp = np.zeros(n_traj)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] v = np.empty(big, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] cand = np.empty((m, big), dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] probs = np.empty(m)
    cdef Py_ssize_t tr, k, a, i, j, lab
    cdef double complex acc
    cdef double tot, cum, target, p
    with nogil:
        for tr in range(n_traj):
            for i in range(big):
                v[i] = rho_vec[i]
            for k in range(n):
                tot = 0.0
                for a in range(m):
                    for i in range(big):
                        acc = 0.0
                        for j in range(big):
                            acc = acc + s_ops[a, i, j] * v[j]
                        cand[a, i] = acc
                    p = 0.0
                    for i in range(dim):
                        p += cand[a, i * (dim + 1)].real
                    if p < 0.0:
                        p = 0.0
                    probs[a] = p
                    tot += p
                target = uniforms[tr, k] * tot
                cum = 0.0
                lab = m - 1
                for a in range(m):
                    cum += probs[a]
                    if cum > target:
                        lab = a
                        break
                if probs[lab] <= 0.0:
                    for a in range(m):
                        if probs[a] > 0.0:
                            lab = a
                            break
                p = probs[lab]
                labels[tr, k] = lab
                logp[tr] += log(p)
                for i in range(big):
                    v[i] = cand[lab, i] / p
    return labels, logp
