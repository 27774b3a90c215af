# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics are defined by rydsps._pykernels."""
import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t

cnp.import_array()


def contaminant_chain(const double[::1] u, double survive, double p_c, Py_ssize_t train_len):
    cdef Py_ssize_t n = u.shape[0]
    out = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] x = out
    cdef Py_ssize_t i
    cdef uint8_t prev = 0
    for i in range(n):
        if i % train_len == 0:
            prev = 0
        if prev:
            prev = 1 if u[i] < survive else 0
        else:
            prev = 1 if u[i] < p_c else 0
        x[i] = prev
    return out


def coincidence_histogram(const int64_t[::1] t1, const int64_t[::1] t2, int64_t bin_width, int64_t tau_max):
    cdef Py_ssize_t nbins = (2 * tau_max) // bin_width
    counts = np.zeros(nbins, dtype=np.int64)
    cdef int64_t[::1] c = counts
    cdef Py_ssize_t n1 = t1.shape[0], n2 = t2.shape[0]
    cdef Py_ssize_t i, j, lo = 0
    cdef int64_t a, lower, upper
    for i in range(n1):
        a = t1[i]
        lower = a - tau_max
        upper = a + tau_max
        while lo < n2 and t2[lo] < lower:
            lo += 1
        j = lo
        while j < n2 and t2[j] < upper:
            c[(t2[j] - lower) // bin_width] += 1
            j += 1
    return counts
