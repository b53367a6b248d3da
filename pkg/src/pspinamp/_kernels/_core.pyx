# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, floor

cnp.import_array()


def interp_linear(double x0, double dx, double[::1] vals, xq, double left, double right):
    cdef double[::1] q = np.ascontiguousarray(xq, dtype=np.float64).ravel()
    cdef Py_ssize_t n = vals.shape[0], m = q.shape[0], k, j
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double u, s
    for k in range(m):
        u = (q[k] - x0) / dx
        if u < 0.0:
            out[k] = left
        elif u > n - 1:
            out[k] = right
        else:
            j = <Py_ssize_t>floor(u)
            if j >= n - 1:
                out[k] = vals[n - 1]
            else:
                s = u - j
                out[k] = vals[j] * (1.0 - s) + vals[j + 1] * s
    return out_arr.reshape(np.shape(xq))


cdef inline double _herm(double p0, double p1, double m0, double m1, double s, double dx) nogil:
    cdef double s2 = s * s, s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * dx * m0
            + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * dx * m1)


def convolve_slice(double x0, double dx, double[::1] phi, double[::1] phi_x,
                   double[::1] phi_xx, double[::1] xt, double sigma, double a,
                   double[::1] nodes, double[::1] weights):
    cdef Py_ssize_t n = phi.shape[0], nt = xt.shape[0], nq = nodes.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double x_end = x0 + dx * (n - 1)
    out_a = np.empty(nt)
    ox_a = np.empty(nt)
    oxx_a = np.empty(nt)
    cdef double[::1] out = out_a, ox = ox_a, oxx = oxx_a
    cdef double[::1] p = np.empty(nq), px = np.empty(nq), pxx = np.empty(nq)
    cdef double xq, u, s, mx, S, wt, m1, m2, m3
    with nogil:
        for i in range(nt):
            for k in range(nq):
                xq = xt[i] + sigma * nodes[k]
                if xq > x_end:
                    p[k] = phi[n - 1] + (xq - x_end)
                    px[k] = 1.0
                    pxx[k] = 0.0
                elif xq < x0:
                    p[k] = phi[0] + (x0 - xq)
                    px[k] = -1.0
                    pxx[k] = 0.0
                else:
                    u = (xq - x0) / dx
                    j = <Py_ssize_t>floor(u)
                    if j > n - 2:
                        j = n - 2
                    s = u - j
                    p[k] = _herm(phi[j], phi[j + 1], phi_x[j], phi_x[j + 1], s, dx)
                    px[k] = _herm(phi_x[j], phi_x[j + 1], phi_xx[j], phi_xx[j + 1], s, dx)
                    pxx[k] = phi_xx[j] * (1.0 - s) + phi_xx[j + 1] * s
            if a > 0.0:
                mx = a * p[0]
                for k in range(1, nq):
                    if a * p[k] > mx:
                        mx = a * p[k]
                S = 0.0
                for k in range(nq):
                    S += weights[k] * exp(a * p[k] - mx)
                m1 = 0.0
                m2 = 0.0
                m3 = 0.0
                for k in range(nq):
                    wt = weights[k] * exp(a * p[k] - mx) / S
                    m1 += wt * px[k]
                    m2 += wt * px[k] * px[k]
                    m3 += wt * pxx[k]
                out[i] = (mx + log(S)) / a
                ox[i] = m1
                s = m2 - m1 * m1
                if s < 0.0:
                    s = 0.0
                oxx[i] = m3 + a * s
            else:
                m1 = 0.0
                m2 = 0.0
                m3 = 0.0
                for k in range(nq):
                    m1 += weights[k] * p[k]
                    m2 += weights[k] * px[k]
                    m3 += weights[k] * pxx[k]
                out[i] = m1
                ox[i] = m2
                oxx[i] = m3
    return out_a, ox_a, oxx_a


def gray_code_enumerate(int n, term_values, cnp.intp_t[::1] flip_ptr,
                        cnp.intp_t[::1] flip_idx, bint record_all):
    cdef double[::1] vals = np.array(term_values, dtype=np.float64)
    cdef Py_ssize_t total = (<Py_ssize_t>1) << n
    energies_a = np.empty(total if record_all else 0)
    cdef double[::1] energies = energies_a
    cdef double h = 0.0, best, d
    cdef Py_ssize_t t, step, i, code = 0, best_code = 0, q
    for t in range(vals.shape[0]):
        h += vals[t]
    best = h
    if record_all:
        energies[0] = h
    with nogil:
        for step in range(1, total):
            i = 0
            q = step
            while (q & 1) == 0:
                q >>= 1
                i += 1
            d = 0.0
            for t in range(flip_ptr[i], flip_ptr[i + 1]):
                d += vals[flip_idx[t]]
                vals[flip_idx[t]] = -vals[flip_idx[t]]
            h -= 2.0 * d
            code ^= (<Py_ssize_t>1) << i
            if record_all:
                energies[step] = h
            if h > best:
                best = h
                best_code = code
    return best, best_code, energies_a
