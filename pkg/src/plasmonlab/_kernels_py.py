"""Pure-Python fallback for the compiled kernels.

Selected at import time by plasmonlab.coincidence when the Cython extension
is not built.  Counting semantics are identical tag-for-tag (see the
extension's docstring for the contract); only speed differs.  The EM update
uses vectorized numpy, so per-iteration results may differ from the
compiled loop in the last floating-point digit.
"""

import numpy as np

BACKEND = "python"


def count_pairs(x, y, window_ps, tau_ps):
    """Number of greedily matched (x, y) pairs within the centered window."""
    half = window_ps // 2
    nx = len(x)
    i = 0
    count = 0
    xs = memoryview(np.ascontiguousarray(x, dtype=np.int64))
    for ty in np.asarray(y, dtype=np.int64).tolist():
        lo = ty - tau_ps - half
        hi = ty - tau_ps + half
        while i < nx and xs[i] < lo:
            i += 1
        if i < nx and xs[i] <= hi:
            count += 1
            i += 1
    return count


def count_triples(a, b1, b2, window_ps, tau_ps):
    """Number of A tags with at least one B1 and one B2 tag in window."""
    half = window_ps // 2
    n1 = len(b1)
    n2 = len(b2)
    v1 = memoryview(np.ascontiguousarray(b1, dtype=np.int64))
    v2 = memoryview(np.ascontiguousarray(b2, dtype=np.int64))
    i1 = i2 = 0
    count = 0
    for ta in np.asarray(a, dtype=np.int64).tolist():
        lo1 = ta - half
        lo2 = ta + tau_ps - half
        while i1 < n1 and v1[i1] < lo1:
            i1 += 1
        while i2 < n2 and v2[i2] < lo2:
            i2 += 1
        if i1 < n1 and v1[i1] <= ta + half and i2 < n2 and v2[i2] <= ta + tau_ps + half:
            count += 1
    return count


def dead_time_mask(times, dead_ps):
    """Boolean keep-mask applying a non-paralyzable dead time to sorted tags."""
    n = len(times)
    keep = np.ones(n, dtype=bool)
    if dead_ps <= 0 or n == 0:
        return keep
    tl = np.asarray(times, dtype=np.int64).tolist()
    last = tl[0]
    for i in range(1, n):
        if tl[i] - last < dead_ps:
            keep[i] = False
        else:
            last = tl[i]
    return keep


def _loglik(rho, A, f, weights):
    p = np.clip(A @ rho, 1e-300, 1.0 - 1e-15)
    ll = weights * f * np.log(p)
    click = f < 1.0
    ll = ll + np.where(click, weights * (1.0 - f) * np.log1p(-p), 0.0)
    return float(ll.sum())


def em_iterate(rho, A, f, weights, epsilon, max_iters, noclick_only, ll_trace):
    """Run EM updates on rho in place; see the compiled twin for semantics."""
    A = np.asarray(A, dtype=float)
    f = np.asarray(f, dtype=float)
    weights = np.asarray(weights, dtype=float)
    col = A.sum(axis=0)
    wtot = weights.sum()
    trace = len(ll_trace) > 0
    it = 0
    converged = False
    ll = _loglik(rho, A, f, weights)
    while it < max_iters:
        if trace and it < len(ll_trace):
            ll_trace[it] = ll
        p = np.clip(A @ rho, 1e-300, None)
        if noclick_only:
            mult = (A * (f / p)[:, None]).sum(axis=0) / col
        else:
            r = weights * f / p
            s = weights * (1.0 - f) / np.clip(1.0 - p, 1e-300, None)
            mult = (A * r[:, None] + (1.0 - A) * s[:, None]).sum(axis=0) / wtot
        new = rho * mult
        new /= new.sum()
        delta = float(np.max(np.abs(new - rho)))
        rho[:] = new
        it += 1
        ll = _loglik(rho, A, f, weights)
        if delta < epsilon:
            converged = True
            break
    return it, converged, ll
