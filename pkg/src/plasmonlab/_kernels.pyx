# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: coincidence counting, dead-time filtering and the
EM tomography iteration.

plasmonlab._kernels_py holds the pure-Python twin of this module; the
coincidence module picks whichever imports.  Counting semantics here are
the contract and must match the Python twin tag-for-tag:

* pairs: greedy earliest-match, each tag consumed at most once, a Y tag at
  t_y matches an X tag at t_x when |t_y - tau - t_x| <= window // 2;
* triples: an A tag counts when each B window (B2 shifted by tau) holds at
  least one tag, without consuming them;
* dead time: a tag is kept when it is at least dead_ps after the previous
  kept tag on the same channel.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, log1p, fabs

cnp.import_array()

BACKEND = "compiled"


def count_pairs(cnp.int64_t[::1] x, cnp.int64_t[::1] y, long long window_ps, long long tau_ps):
    """Number of greedily matched (x, y) pairs within the centered window."""
    cdef Py_ssize_t nx = x.shape[0], ny = y.shape[0]
    cdef Py_ssize_t i = 0, j
    cdef long long half = window_ps // 2
    cdef long long lo, hi, count = 0
    for j in range(ny):
        lo = y[j] - tau_ps - half
        hi = y[j] - tau_ps + half
        while i < nx and x[i] < lo:
            i += 1
        if i < nx and x[i] <= hi:
            count += 1
            i += 1
    return count


def count_triples(cnp.int64_t[::1] a, cnp.int64_t[::1] b1, cnp.int64_t[::1] b2,
                  long long window_ps, long long tau_ps):
    """Number of A tags with at least one B1 and one B2 tag in window."""
    cdef Py_ssize_t na = a.shape[0], n1 = b1.shape[0], n2 = b2.shape[0]
    cdef Py_ssize_t i1 = 0, i2 = 0, k
    cdef long long half = window_ps // 2
    cdef long long ta, count = 0
    for k in range(na):
        ta = a[k]
        while i1 < n1 and b1[i1] < ta - half:
            i1 += 1
        while i2 < n2 and b2[i2] < ta + tau_ps - half:
            i2 += 1
        if (i1 < n1 and b1[i1] <= ta + half and
                i2 < n2 and b2[i2] <= ta + tau_ps + half):
            count += 1
    return count


def dead_time_mask(cnp.int64_t[::1] times, long long dead_ps):
    """Boolean keep-mask applying a non-paralyzable dead time to sorted tags."""
    cdef Py_ssize_t n = times.shape[0], i
    out = np.ones(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] keep = out
    if dead_ps <= 0 or n == 0:
        return out.view(np.bool_)
    cdef long long last = times[0]
    for i in range(1, n):
        if times[i] - last < dead_ps:
            keep[i] = 0
        else:
            last = times[i]
    return out.view(np.bool_)


def em_iterate(cnp.float64_t[::1] rho, cnp.float64_t[:, ::1] A,
               cnp.float64_t[::1] f, cnp.float64_t[::1] weights,
               double epsilon, long long max_iters, int noclick_only,
               cnp.float64_t[::1] ll_trace):
    """Run EM updates on rho in place.

    A[nu, n] = (1 - eta_nu)^n; f are no-click frequencies; weights are trial
    counts per efficiency.  noclick_only selects the no-click-frequency
    update (column-normalized multiplicative form) instead of the default
    two-outcome binomial update.  When ll_trace is non-empty it receives the
    binomial log-likelihood evaluated at the start of each iteration.
    Returns (iterations, converged, final_loglik).
    """
    cdef Py_ssize_t nnu = A.shape[0], nk = A.shape[1]
    cdef Py_ssize_t nu, n
    cdef long long it = 0
    cdef bint converged = False
    cdef bint trace = ll_trace.shape[0] > 0
    cdef double wtot = 0.0, colsum
    cdef double p, rnu, snu, total, delta, ll, newval
    cdef double tiny = 1e-300
    cdef cnp.float64_t[::1] mult = np.empty(nk)
    cdef cnp.float64_t[::1] col = np.zeros(nk)

    for nu in range(nnu):
        wtot += weights[nu]
        for n in range(nk):
            col[n] += A[nu, n]

    ll = _loglik(rho, A, f, weights)
    while it < max_iters:
        if trace and it < ll_trace.shape[0]:
            ll_trace[it] = ll
        for n in range(nk):
            mult[n] = 0.0
        for nu in range(nnu):
            p = 0.0
            for n in range(nk):
                p += A[nu, n] * rho[n]
            if p < tiny:
                p = tiny
            rnu = weights[nu] * f[nu] / p
            if noclick_only:
                for n in range(nk):
                    mult[n] += A[nu, n] * f[nu] / p
            else:
                snu = 1.0 - p
                if snu < tiny:
                    snu = tiny
                snu = weights[nu] * (1.0 - f[nu]) / snu
                for n in range(nk):
                    mult[n] += A[nu, n] * rnu + (1.0 - A[nu, n]) * snu
        total = 0.0
        delta = 0.0
        if noclick_only:
            for n in range(nk):
                mult[n] = rho[n] * mult[n] / col[n]
                total += mult[n]
        else:
            for n in range(nk):
                mult[n] = rho[n] * mult[n] / wtot
                total += mult[n]
        for n in range(nk):
            newval = mult[n] / total
            if fabs(newval - rho[n]) > delta:
                delta = fabs(newval - rho[n])
            rho[n] = newval
        it += 1
        ll = _loglik(rho, A, f, weights)
        if delta < epsilon:
            converged = True
            break
    return it, converged, ll


cdef double _loglik(cnp.float64_t[::1] rho, cnp.float64_t[:, ::1] A,
                    cnp.float64_t[::1] f, cnp.float64_t[::1] weights):
    cdef Py_ssize_t nnu = A.shape[0], nk = A.shape[1]
    cdef Py_ssize_t nu, n
    cdef double p, ll = 0.0
    cdef double tiny = 1e-300
    for nu in range(nnu):
        p = 0.0
        for n in range(nk):
            p += A[nu, n] * rho[n]
        if p < tiny:
            p = tiny
        if p > 1.0 - 1e-15:
            p = 1.0 - 1e-15
        ll += weights[nu] * f[nu] * log(p)
        if f[nu] < 1.0:
            ll += weights[nu] * (1.0 - f[nu]) * log1p(-p)
    return ll
