"""Dense symmetric-matrix helpers and Gaussian density evaluation.

All density work is done in log space: with up to ~100 variables the raw
multivariate normal density underflows long before the log-likelihood
becomes uninformative.
"""

import numpy as np

from .exceptions import NotPositiveDefiniteError

LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(a, rtol=1e-12, name="matrix"):
    """Validate near-symmetry and return the exactly symmetric average."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.size:
        scale = max(1.0, float(np.abs(a).max()))
        if float(np.abs(a - a.T).max()) > rtol * scale:
            raise ValueError(f"{name} is not symmetric within tolerance {rtol}")
    return (a + a.T) / 2.0


def cholesky_pd(a, name="matrix"):
    """Lower Cholesky factor; failure signals a non-PD input."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc


def is_positive_definite(a):
    try:
        np.linalg.cholesky(a)
        return True
    except np.linalg.LinAlgError:
        return False


def chol_logdet(chol):
    """log det of A given its lower Cholesky factor."""
    return 2.0 * float(np.log(np.diag(chol)).sum())


def mvn_logpdf(x, mean, cov):
    """log N(x | mean, cov) via Cholesky factorization."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    chol = cholesky_pd(cov, name="covariance")
    z = np.linalg.solve(chol, x - mean)
    v = x.shape[-1]
    return float(-0.5 * (v * LOG_2PI + z @ z) - np.log(np.diag(chol)).sum())


def mvn_logpdf_rows(X, mean, chol):
    """Row-wise log N(x_i | mean, LL^T) for a precomputed Cholesky factor."""
    z = np.linalg.solve(chol, (X - mean).T)
    quad = np.einsum("ij,ij->j", z, z)
    v = X.shape[1]
    return -0.5 * (v * LOG_2PI + quad) - np.log(np.diag(chol)).sum()


def weighted_moments(X, w):
    """Weighted sample size, mean and 1/n-normalized scatter matrix.

    The scatter uses the maximum-likelihood (1/n_eff) normalization, which
    is what the component-wise covariance objective expects.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != (X.shape[0],):
        raise ValueError("weights must have one entry per observation")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    n_eff = float(w.sum())
    if n_eff <= 0:
        raise ValueError("weights sum to zero")
    mean = (w @ X) / n_eff
    xc = X - mean
    scatter = (xc * w[:, None]).T @ xc / n_eff
    return n_eff, mean, (scatter + scatter.T) / 2.0


def correlation_matrix(scatter):
    """Rescale a scatter matrix to unit diagonal."""
    scatter = np.asarray(scatter, dtype=float)
    d = np.diag(scatter)
    if np.any(d <= 0):
        raise ValueError("scatter has a nonpositive diagonal entry")
    u = 1.0 / np.sqrt(d)
    r = scatter * np.outer(u, u)
    np.fill_diagonal(r, 1.0)
    return (r + r.T) / 2.0
