# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_kernels_py`` holds the reference twins."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, NAN

cnp.import_array()


def first_crossing(double[::1] artificial, double channel):
    """1-based index of the first round whose artificial level is <= ``channel``.

    Returns the trajectory length when no round crosses.
    """
    cdef Py_ssize_t t, n = artificial.shape[0]
    for t in range(n):
        if artificial[t] <= channel:
            return t + 1
    return n


def wasserstein_rows(double[:, ::1] pmfs, double[::1] target):
    cdef Py_ssize_t k, z, K = pmfs.shape[0], Z = pmfs.shape[1]
    cdef double acc, tot
    out = np.empty(K)
    cdef double[::1] o = out
    for k in range(K):
        acc = 0.0
        tot = 0.0
        for z in range(Z - 1):
            acc += pmfs[k, z] - target[z]
            tot += fabs(acc)
        o[k] = tot
    return out


def quadratic_trajectory(
    double[:, :, ::1] A,
    double[:, ::1] b,
    double l2_reg,
    double[::1] weights,
    double lr,
    double[::1] w0,
    double[:, ::1] noise_std,
    double[:, :, :, ::1] z,
    double[:, ::1] ref_hessian,
    double[::1] ref_minimizer,
):
    """Noisy weighted gradient descent on per-device quadratics, batched over seeds.

    Round ``t`` of seed ``s`` adds ``noise_std[t, k] * z[s, t, k, :]`` to device
    ``k``'s gradient. Returns ``(gaps, ratio)``: the gaps
    ``0.5 (w - w*)^T H (w - w*)`` of shape (S, T + 1), column 0 being the
    starting gap, and the noise-free dissimilarity ratio
    ``sum_k G_k ||grad F_k||^2 / ||sum_k G_k grad F_k||^2`` of shape (S, T)
    at the iterate entering each round (NaN when the global gradient is 0).
    """
    cdef Py_ssize_t S = z.shape[0], T = z.shape[1], K = z.shape[2], q = z.shape[3]
    cdef Py_ssize_t s, t, k, i, j
    cdef double acc, gk, sd, gap, energy, gnorm2
    gaps = np.empty((S, T + 1))
    ratio = np.empty((S, T))
    cdef double[:, ::1] out = gaps
    cdef double[:, ::1] rat = ratio
    cdef double[::1] w = np.empty(q)
    cdef double[::1] r = np.empty(q)
    cdef double[::1] clean = np.empty(q)
    cdef double[::1] noise = np.empty(q)
    cdef double[::1] local = np.empty(q)
    cdef double[::1] d = np.empty(q)
    for s in range(S):
        for i in range(q):
            w[i] = w0[i]
        for t in range(T + 1):
            for i in range(q):
                d[i] = w[i] - ref_minimizer[i]
            gap = 0.0
            for i in range(q):
                acc = 0.0
                for j in range(q):
                    acc += ref_hessian[i, j] * d[j]
                gap += d[i] * acc
            out[s, t] = 0.5 * gap
            if t == T:
                break
            for i in range(q):
                clean[i] = 0.0
                noise[i] = 0.0
            energy = 0.0
            for k in range(K):
                gk = weights[k]
                if gk == 0.0:
                    continue
                sd = noise_std[t, k]
                for i in range(q):
                    r[i] = w[i] - b[k, i]
                acc = 0.0
                for i in range(q):
                    local[i] = 0.0
                    for j in range(q):
                        local[i] += A[k, i, j] * r[j]
                    local[i] += l2_reg * w[i]
                    acc += local[i] * local[i]
                energy += gk * acc
                for i in range(q):
                    clean[i] += gk * local[i]
                    noise[i] += gk * (sd * z[s, t, k, i])
            gnorm2 = 0.0
            for i in range(q):
                gnorm2 += clean[i] * clean[i]
            rat[s, t] = energy / gnorm2 if gnorm2 > 0.0 else NAN
            for i in range(q):
                w[i] -= lr * (clean[i] + noise[i])
    return gaps, ratio
