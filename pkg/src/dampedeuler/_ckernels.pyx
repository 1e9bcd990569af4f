# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``.

Signatures and return conventions match the pure-Python module exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()


def sign_sum_sorted(const double[::1] x, const double[::1] w):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i = 0, j, k
    cdef double total = 0.0, below = 0.0, run
    out = np.empty(n)
    cdef double[::1] o = out
    for k in range(n):
        total += w[k]
    while i < n:
        j = i
        run = 0.0
        while j < n and x[j] == x[i]:
            run += w[j]
            j += 1
        for k in range(i, j):
            o[k] = below - (total - below - run)
        below += run
        i = j
    return out


def pressure_gradient(const double[::1] chi, double m):
    cdef Py_ssize_t n = chi.shape[0]
    cdef Py_ssize_t i
    cdef double d, s, left = 0.0, right
    cdef int ipow = <int>m if m == <int>m and 1 <= m <= 4 else 0
    cdef int k
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        if i < n - 1:
            d = chi[i + 1] - chi[i]
            if not d > 0.0:
                return None
            if ipow:
                # small integer exponents: repeated division beats pow()
                s = 1.0 / (n * d)
                right = s
                for k in range(1, ipow):
                    right *= s
            else:
                right = pow(n * d, -m)
        else:
            right = 0.0
        o[i] = n * (right - left)
        left = right
    return out


def merge_cascade(const double[::1] x, const double[::1] v,
                  const double[::1] s, double tol):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, top = -1, nev = 0
    cdef double total
    xs_a = np.empty(n)
    vs_a = np.empty(n)
    ss_a = np.empty(n)
    ev_a = np.empty((max(n - 1, 0), 4))
    cdef double[::1] xs = xs_a, vs = vs_a, ss = ss_a
    cdef double[:, ::1] ev = ev_a
    for i in range(n):
        top += 1
        xs[top] = x[i]
        vs[top] = v[i]
        ss[top] = s[i]
        while top > 0 and xs[top] - xs[top - 1] <= tol:
            ev[nev, 0] = ss[top - 1]
            ev[nev, 1] = ss[top]
            ev[nev, 2] = vs[top - 1]
            ev[nev, 3] = vs[top]
            nev += 1
            total = ss[top - 1] + ss[top]
            xs[top - 1] = (ss[top - 1] * xs[top - 1] + ss[top] * xs[top]) / total
            vs[top - 1] = (ss[top - 1] * vs[top - 1] + ss[top] * vs[top]) / total
            ss[top - 1] = total
            top -= 1
    return (xs_a[:top + 1].copy(), vs_a[:top + 1].copy(),
            ss_a[:top + 1].copy(), ev_a[:nev].copy())


def pairwise_sum(const double[::1] x, const double[::1] w, dfun, Py_ssize_t chunk=512):
    # arbitrary callables cannot be compiled; defer to the NumPy version
    from ._kernels_py import pairwise_sum as _ps
    return _ps(np.asarray(x), np.asarray(w), dfun, chunk)
