# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``; same contracts."""
import numpy as np

from libc.math cimport log, fabs, isfinite, INFINITY
from libc.stdint cimport uint64_t, int64_t

cdef extern from "complex.h" nogil:
    double complex clog(double complex)
    double cabs(double complex)
    double cimag(double complex)
    double creal(double complex)

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_PI = 6.283185307179586


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double to_unit(uint64_t x) noexcept nogil:
    return <double>((x >> 11) + 1) * 1.1102230246251565e-16


def uniform_block(uint64_t seed, uint64_t first_stream, Py_ssize_t n_streams,
                  uint64_t counter_start, Py_ssize_t n_counters):
    out = np.empty((n_streams, n_counters), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint64_t s = mix64(seed), key
    cdef Py_ssize_t r, c
    with nogil:
        for r in range(n_streams):
            key = mix64(s ^ mix64(first_stream + <uint64_t>r + GOLDEN))
            for c in range(n_counters):
                o[r, c] = to_unit(mix64(key + (counter_start + <uint64_t>c + 1) * GOLDEN))
    return out


def born_winners(weights, uint64_t seed, uint64_t first_stream, Py_ssize_t n_trials, bint phase=False):
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0], t, k
    out = np.empty(n_trials, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef uint64_t s = mix64(seed), key
    cdef double best, q, u
    cdef int64_t best_k
    with nogil:
        for t in range(n_trials):
            key = mix64(s ^ mix64(first_stream + <uint64_t>t + GOLDEN))
            best = -INFINITY
            best_k = 0
            for k in range(n):
                if w[k] <= 0.0:
                    continue
                u = to_unit(mix64(key + (<uint64_t>k + 1) * GOLDEN))
                if phase:
                    q = log((TWO_PI * u) / TWO_PI) / w[k]
                else:
                    q = log(u) / w[k]
                if q > best:
                    best = q
                    best_k = k
            o[t] = best_k
    return out


def log_derivatives(psi, double dx, double eps, bint periodic):
    cdef const double complex[::1] p = np.ascontiguousarray(psi, dtype=np.complex128)
    cdef Py_ssize_t n = p.shape[0], j, jm, jp
    d1_arr = np.zeros(n, dtype=np.complex128)
    d2_arr = np.zeros(n, dtype=np.complex128)
    w_arr = np.zeros(n, dtype=np.float64)
    cdef double complex[::1] d1 = d1_arr
    cdef double complex[::1] d2 = d2_arr
    cdef double[::1] wt = w_arr
    cdef double[::1] w = np.empty(n, dtype=np.float64)
    cdef double complex[::1] r = np.empty(n, dtype=np.complex128)
    cdef double amax = 0.0, a, floor, max_step = 0.0, step, x
    cdef double complex z
    with nogil:
        for j in range(n):
            a = cabs(p[j])
            if a > amax:
                amax = a
        floor = eps * amax
        for j in range(n):
            if floor > 0.0:
                x = cabs(p[j]) / floor
                w[j] = x * x if x < 1.0 else 1.0
            else:
                w[j] = 0.0
        for j in range(n):
            if j == n - 1 and not periodic:
                r[j] = 0.0
                continue
            jp = j + 1 if j < n - 1 else 0
            z = clog(p[jp] / p[j])
            if isfinite(creal(z)) and isfinite(cimag(z)):
                r[j] = z
            else:
                r[j] = 0.0
                w[j] = 0.0
                w[jp] = 0.0
        for j in range(n):
            if not periodic and (j == 0 or j == n - 1):
                continue
            jm = j - 1 if j > 0 else n - 1
            jp = j + 1 if j < n - 1 else 0
            a = w[j]
            if w[jm] < a:
                a = w[jm]
            if w[jp] < a:
                a = w[jp]
            if a <= 0.0:
                continue
            wt[j] = a
            d1[j] = (r[j] + r[jm]) / (2.0 * dx)
            d2[j] = (r[j] - r[jm]) / (dx * dx)
            if a < 1.0:
                continue
            step = fabs(cimag(r[j]))
            if fabs(cimag(r[jm])) > step:
                step = fabs(cimag(r[jm]))
            if step > max_step:
                max_step = step
    return d1_arr, d2_arr, w_arr, max_step
