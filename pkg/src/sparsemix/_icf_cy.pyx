# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel for the iterative covariance sweep.

Must stay in lockstep with the pure-numpy twin ``_icf_py``: same update
order, same convergence rule, same status codes (0 converged, 1 sweep
budget exhausted, 2 numerical failure).

All dense buffers are C-order and kept fully symmetric, so handing them to
Fortran-order LAPACK routines is transparent; the only care needed is which
triangle a routine fills, handled in ``_sym_invert_inplace``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, isfinite
from scipy.linalg.cython_lapack cimport dpotrf, dpotri, dposv

cnp.import_array()

ABS_GAIN_FLOOR = 1e-9
cdef double _ABS_GAIN_FLOOR = 1e-9


cdef int _sym_invert_inplace(double* a, int m) noexcept nogil:
    """Invert a full-storage symmetric PD m x m matrix in place."""
    cdef int info = 0
    cdef char uplo = b'L'
    cdef int r, c
    dpotrf(&uplo, &m, a, &m, &info)
    if info != 0:
        return info
    dpotri(&uplo, &m, a, &m, &info)
    if info != 0:
        return info
    # Fortran-lower == C-upper: valid entries sit at row <= col; mirror them.
    for r in range(m):
        for c in range(r):
            a[r * m + c] = a[c * m + r]
    return 0


cdef double _core_objective(double* s, double* sigma, double* work,
                            int v, int* fail) noexcept nogil:
    """tr(S Sigma^-1) + log det Sigma; sets *fail on factorization failure."""
    cdef int i, j, info = 0
    cdef char uplo = b'L'
    cdef double logdet = 0.0, tr = 0.0
    for i in range(v * v):
        work[i] = sigma[i]
    dpotrf(&uplo, &v, work, &v, &info)
    if info != 0:
        fail[0] = 1
        return 0.0
    for i in range(v):
        logdet += 2.0 * log(work[i * v + i])
    dpotri(&uplo, &v, work, &v, &info)
    if info != 0:
        fail[0] = 1
        return 0.0
    for i in range(v):
        for j in range(i):
            work[i * v + j] = work[j * v + i]
    for i in range(v * v):
        tr += work[i] * s[i]
    fail[0] = 0
    return tr + logdet


cdef int _sweep_once(double* s, unsigned char* adj, double* sigma,
                     double* om, double* c1, double* gram, double* avec,
                     double* beta, int* rest, int* pos,
                     int v) noexcept nogil:
    """One full pass over the variables; returns 0 on success."""
    cdef int j, h, m, ns, r, c, q, info
    cdef double lam, acc
    cdef int nrhs = 1
    cdef char uplo = b'L'
    for j in range(v):
        m = 0
        ns = 0
        for h in range(v):
            if h == j:
                continue
            rest[m] = h
            if adj[j * v + h]:
                pos[ns] = m
                ns += 1
            m += 1
        if ns == 0:
            sigma[j * v + j] = s[j * v + j]
            continue
        # om <- inv(Sigma[rest, rest])
        for r in range(m):
            for c in range(m):
                om[r * m + c] = sigma[rest[r] * v + rest[c]]
        if _sym_invert_inplace(om, m) != 0:
            return 1
        # avec <- S[j, rest] @ om[:, pos]
        for c in range(ns):
            acc = 0.0
            for r in range(m):
                acc += s[j * v + rest[r]] * om[r * m + pos[c]]
            avec[c] = acc
        # c1 <- S[rest, rest] @ om[:, pos]
        for r in range(m):
            for c in range(ns):
                acc = 0.0
                for q in range(m):
                    acc += s[rest[r] * v + rest[q]] * om[q * m + pos[c]]
                c1[r * ns + c] = acc
        # gram <- om[:, pos].T @ c1   (symmetric PD)
        for r in range(ns):
            for c in range(ns):
                acc = 0.0
                for q in range(m):
                    acc += om[q * m + pos[r]] * c1[q * ns + c]
                gram[r * ns + c] = acc
        # beta <- gram^-1 avec
        for r in range(ns):
            beta[r] = avec[r]
        info = 0
        dposv(&uplo, &ns, &nrhs, gram, &ns, beta, &ns, &info)
        if info != 0:
            return 1
        lam = s[j * v + j]
        for r in range(ns):
            lam -= beta[r] * avec[r]
        if not isfinite(lam) or lam <= 0.0:
            return 1
        for r in range(ns):
            h = rest[pos[r]]
            sigma[j * v + h] = beta[r]
            sigma[h * v + j] = beta[r]
        acc = 0.0
        for r in range(ns):
            for c in range(ns):
                acc += beta[r] * om[pos[r] * m + pos[c]] * beta[c]
        sigma[j * v + j] = lam + acc
    return 0


cdef int _sweep_loop(double* s, unsigned char* adj, double* sigma,
                     double* om, double* c1, double* gram, double* avec,
                     double* beta, double* work, int* rest, int* pos,
                     double* trace, int v, double tol, int max_sweeps,
                     int polish_sweeps, int* n_sweeps,
                     int* trace_len) noexcept nogil:
    cdef int sweep, fail
    cdef int status = 1
    cdef double h_prev, h_new, gain, thr, mag

    fail = 0
    h_prev = _core_objective(s, sigma, work, v, &fail)
    if fail or not isfinite(h_prev):
        trace_len[0] = 0
        n_sweeps[0] = 0
        return 2
    trace[0] = h_prev
    trace_len[0] = 1
    n_sweeps[0] = 0

    for sweep in range(max_sweeps):
        if _sweep_once(s, adj, sigma, om, c1, gram, avec, beta,
                       rest, pos, v) != 0:
            return 2
        n_sweeps[0] = sweep + 1
        fail = 0
        h_new = _core_objective(s, sigma, work, v, &fail)
        if fail or not isfinite(h_new):
            return 2
        gain = h_prev - h_new
        trace[trace_len[0]] = h_new
        trace_len[0] += 1
        mag = h_prev if h_prev >= 0 else -h_prev
        thr = tol * mag
        if mag < 1.0 and thr < _ABS_GAIN_FLOOR:
            thr = _ABS_GAIN_FLOOR
        if gain < thr:
            status = 0
            break
        h_prev = h_new
    if status == 0:
        for sweep in range(polish_sweeps):
            if _sweep_once(s, adj, sigma, om, c1, gram, avec, beta,
                           rest, pos, v) != 0:
                return 2
            n_sweeps[0] += 1
            fail = 0
            h_new = _core_objective(s, sigma, work, v, &fail)
            if fail or not isfinite(h_new):
                return 2
            trace[trace_len[0]] = h_new
            trace_len[0] += 1
    return status


def icf_kernel(S, adj, double tol, int max_sweeps, int polish_sweeps=0):
    """Drop-in replacement for ``_icf_py.icf_kernel``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] s_arr = \
        np.ascontiguousarray(S, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] adj_arr = \
        np.ascontiguousarray(adj, dtype=np.uint8)
    cdef int v = s_arr.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] sigma = \
        np.diag(np.diag(s_arr)).astype(np.float64)

    cdef int m = v - 1 if v > 1 else 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] om = np.empty(m * m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c1 = np.empty(m * m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gram = np.empty(m * m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] avec = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] beta = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.empty(v * v)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rest = np.empty(m, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pos = np.empty(m, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] trace = \
        np.empty(max_sweeps + polish_sweeps + 1)

    cdef int n_sweeps = 0, trace_len = 0, status
    with nogil:
        status = _sweep_loop(&s_arr[0, 0], &adj_arr[0, 0], &sigma[0, 0],
                             &om[0], &c1[0], &gram[0], &avec[0], &beta[0],
                             &work[0], <int*> &rest[0], <int*> &pos[0],
                             &trace[0], v, tol, max_sweeps, polish_sweeps,
                             &n_sweeps, &trace_len)
    return sigma, n_sweeps, status, trace[:trace_len].copy()
