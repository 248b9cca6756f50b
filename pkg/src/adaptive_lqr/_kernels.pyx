# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics mirror ``_kernels_py``; see that module for
the argument contracts."""
import numpy as np
from libc.math cimport sqrt


def rollout(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] l,
            const double[:, ::1] q, const double[:, ::1] r, const double[:, ::1] noise,
            double[:, ::1] states, double[:, ::1] inputs, double[::1] costs,
            double[:, ::1] gram, double[:, ::1] cross, bint accumulate, double limit):
    cdef Py_ssize_t p = a.shape[0]
    cdef Py_ssize_t nr = b.shape[1]
    cdef Py_ssize_t nq = p + nr
    cdef Py_ssize_t steps = noise.shape[0]
    cdef Py_ssize_t i, j, h
    cdef double acc, c, norm2
    cdef double[::1] z = np.empty(nq)
    cdef double[::1] xn = np.empty(p)

    for i in range(steps):
        for j in range(p):
            z[j] = states[i, j]
        for j in range(nr):
            acc = 0.0
            for h in range(p):
                acc = acc + l[j, h] * z[h]
            z[p + j] = acc
            inputs[i, j] = acc
        c = 0.0
        for j in range(p):
            acc = 0.0
            for h in range(p):
                acc = acc + q[j, h] * z[h]
            c = c + z[j] * acc
        for j in range(nr):
            acc = 0.0
            for h in range(nr):
                acc = acc + r[j, h] * z[p + h]
            c = c + z[p + j] * acc
        costs[i] = c
        norm2 = 0.0
        for j in range(p):
            acc = 0.0
            for h in range(p):
                acc = acc + a[j, h] * z[h]
            for h in range(nr):
                acc = acc + b[j, h] * z[p + h]
            acc = acc + noise[i, j]
            xn[j] = acc
            states[i + 1, j] = acc
            norm2 = norm2 + acc * acc
        if accumulate:
            for j in range(nq):
                for h in range(nq):
                    gram[j, h] = gram[j, h] + z[j] * z[h]
            for j in range(p):
                for h in range(nq):
                    cross[j, h] = cross[j, h] + xn[j] * z[h]
        if not sqrt(norm2) <= limit:
            return i + 1, True
    return steps, False


cdef inline double _quad(const double[:, ::1] m, double[::1] v, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j, h
    cdef double acc, out = 0.0
    for j in range(n):
        acc = 0.0
        for h in range(n):
            acc = acc + m[j, h] * v[h]
        out = out + v[j] * acc
    return out


cdef inline void _congruence(const double[:, ::1] d, double[:, ::1] kin, double[:, ::1] tmp,
                             double[:, ::1] kout, Py_ssize_t p) noexcept nogil:
    # kout = d' kin d
    cdef Py_ssize_t i, j, h
    cdef double acc
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for h in range(p):
                acc = acc + kin[i, h] * d[h, j]
            tmp[i, j] = acc
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for h in range(p):
                acc = acc + d[h, i] * tmp[h, j]
            kout[i, j] = acc


def decompose_terms(const double[:, ::1] a0, const double[:, ::1] b0, const double[:, ::1] lstar,
                    const double[:, ::1] k, const double[:, ::1] m, const double[:, ::1] states,
                    const double[:, ::1] inputs, const double[:, ::1] noise):
    cdef Py_ssize_t n = inputs.shape[0]
    cdef Py_ssize_t p = a0.shape[0]
    cdef Py_ssize_t nr = b0.shape[1]
    cdef Py_ssize_t i, j, h
    cdef double acc, s = 0.0, t = 0.0, z = 0.0, z_zeta = 0.0, zs_xi = 0.0

    cdef double[:, ::1] d = np.empty((p, p))
    cdef double[:, ::1] dev = np.empty((n, nr))
    cdef double[:, ::1] bdev = np.empty((n, p))
    cdef double[:, ::1] xi = np.zeros((n + 1, p))
    cdef double[:, ::1] kj = np.array(k, dtype=np.float64, copy=True)
    cdef double[:, ::1] kn = np.empty((p, p))
    cdef double[:, ::1] tmp = np.empty((p, p))
    cdef double[::1] g = np.zeros(p)
    cdef double[::1] gn = np.empty(p)
    cdef double[::1] dk = np.empty(p)
    cdef double[::1] dx = np.empty(p)
    cdef double[::1] dv = np.empty(nr)

    for i in range(p):
        for j in range(p):
            acc = a0[i, j]
            for h in range(nr):
                acc = acc + b0[i, h] * lstar[h, j]
            d[i, j] = acc
    for i in range(n):
        for j in range(nr):
            acc = inputs[i, j]
            for h in range(p):
                acc = acc - lstar[j, h] * states[i, h]
            dev[i, j] = acc
        for j in range(p):
            acc = 0.0
            for h in range(nr):
                acc = acc + b0[j, h] * dev[i, h]
            bdev[i, j] = acc

    for i in range(1, n + 1):
        for j in range(p):
            acc = 2.0 * bdev[i - 1, j]
            for h in range(p):
                acc = acc + d[j, h] * xi[i - 1, h]
            xi[i, j] = acc
    for i in range(1, n + 1):
        for j in range(p):
            acc = 0.0
            for h in range(p):
                acc = acc + k[j, h] * xi[i, h]
            zs_xi = zs_xi + noise[i - 1, j] * acc

    for i in range(n - 1, -1, -1):
        for j in range(p):
            acc = 0.0
            for h in range(p):
                acc = acc + a0[j, h] * states[i, h]
            for h in range(nr):
                acc = acc + b0[j, h] * inputs[i, h]
            dk[j] = acc
            acc = 0.0
            for h in range(p):
                acc = acc + d[j, h] * states[i, h]
            dx[j] = acc
        s = s + _quad(kj, dx, p) - _quad(kj, dk, p)
        for j in range(nr):
            dv[j] = dev[i, j]
        t = t + _quad(m, dv, nr)
        _congruence(d, kj, tmp, kn, p)
        kj[:, :] = kn
        if i >= 1:
            # g <- (K - K_i) w(i) + D' g
            for j in range(p):
                acc = 0.0
                for h in range(p):
                    acc = acc + (k[j, h] - kj[j, h]) * noise[i - 1, h] + d[h, j] * g[h]
                gn[j] = acc
            for j in range(p):
                g[j] = gn[j]
                z = z + 2.0 * bdev[i - 1, j] * g[j]
            for j in range(p):
                acc = 0.0
                for h in range(p):
                    acc = acc + (k[j, h] - kj[j, h]) * xi[i, h]
                z_zeta = z_zeta + acc * noise[i - 1, j]
    return z, s, t, z_zeta, zs_xi
