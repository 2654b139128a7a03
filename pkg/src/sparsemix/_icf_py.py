"""Pure-numpy fallback kernel for the iterative covariance sweep.

Mirrors the compiled kernel in ``_icf_cy`` exactly: same update order, same
convergence rule, same status codes. Keep the two in sync.

Status codes: 0 converged, 1 sweep budget exhausted, 2 numerical failure
(input or iterate not positive definite).
"""

import numpy as np

# Absolute floor on the per-sweep objective gain threshold, applied when the
# objective magnitude is below 1 and a relative test loses meaning.
ABS_GAIN_FLOOR = 1e-9


def _core_objective(S, Sigma):
    """tr(S Sigma^-1) + log det Sigma, or None if Sigma is not PD."""
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return None
    half = np.linalg.solve(chol, S)
    tr = float(np.linalg.solve(chol, half.T).trace())
    return tr + 2.0 * float(np.log(np.diag(chol)).sum())


def icf_kernel(S, adj, tol, max_sweeps, polish_sweeps=0):
    """One call = full fit: sweep all variables until the objective stalls.

    ``polish_sweeps`` extra sweeps run after the stopping rule fires: near
    the optimum the objective gain drops below measurement noise while the
    coordinate updates still contract the parameters, so callers needing
    identity-grade output keep sweeping for a fixed count.

    Returns (Sigma, sweeps, status, trace) where trace[i] is the core
    objective after i sweeps (index 0 is the diagonal start).
    """
    S = np.ascontiguousarray(S, dtype=np.float64)
    adj = np.ascontiguousarray(adj, dtype=np.uint8)
    v = S.shape[0]
    Sigma = np.diag(np.diag(S)).astype(np.float64)

    h = _core_objective(S, Sigma)
    if h is None or not np.isfinite(h):
        return Sigma, 0, 2, np.empty(0)
    trace = [h]

    def sweep_once():
        for j in range(v):
            nbr = np.flatnonzero(adj[j])
            if nbr.size == 0:
                Sigma[j, j] = S[j, j]
                continue
            rest = np.concatenate((np.arange(j), np.arange(j + 1, v)))
            pos = np.searchsorted(rest, nbr)
            sub = Sigma[np.ix_(rest, rest)]
            try:
                omega = np.linalg.inv(sub)
            except np.linalg.LinAlgError:
                return False
            om_s = omega[:, pos]
            a = S[j, rest] @ om_s
            gram = om_s.T @ S[np.ix_(rest, rest)] @ om_s
            try:
                beta = np.linalg.solve(gram, a)
            except np.linalg.LinAlgError:
                return False
            lam = S[j, j] - float(beta @ a)
            if not np.isfinite(lam) or lam <= 0.0:
                return False
            Sigma[j, nbr] = beta
            Sigma[nbr, j] = beta
            Sigma[j, j] = lam + float(beta @ omega[np.ix_(pos, pos)] @ beta)
        return True

    status = 1
    sweeps = 0
    for _ in range(max_sweeps):
        if not sweep_once():
            return Sigma, sweeps, 2, np.asarray(trace)
        sweeps += 1
        h_new = _core_objective(S, Sigma)
        if h_new is None or not np.isfinite(h_new):
            return Sigma, sweeps, 2, np.asarray(trace)
        gain = trace[-1] - h_new
        trace.append(h_new)
        thr = tol * abs(trace[-2])
        if abs(trace[-2]) < 1.0:
            thr = max(thr, ABS_GAIN_FLOOR)
        if gain < thr:
            status = 0
            break
    if status == 0:
        for _ in range(polish_sweeps):
            if not sweep_once():
                return Sigma, sweeps, 2, np.asarray(trace)
            sweeps += 1
            h_new = _core_objective(S, Sigma)
            if h_new is None or not np.isfinite(h_new):
                return Sigma, sweeps, 2, np.asarray(trace)
            trace.append(h_new)
    return Sigma, sweeps, status, np.asarray(trace)
