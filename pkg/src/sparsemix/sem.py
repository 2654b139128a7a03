"""Structural EM for mixtures of Gaussians with sparse covariance graphs.

One fit alternates three steps until the penalized objective stalls:

  E  posterior membership probabilities from the current parameters,
  M  closed-form weights and means from the responsibilities,
  S  per component, a structure search over graphs scored by the penalized
     profile objective, with the covariance refitted by the constrained
     sweep for every candidate graph.

The previous structure always stays in the S-step candidate set, both
refitted on the new scatter and with its covariance left untouched, so each
full cycle is a generalized-EM step and the objective trace is
non-decreasing. With the regularizing prior enabled (default), scatter
matrices are replaced by their posterior-mode moments, which keeps the
sweep well-posed even for small or collapsing components.

Model choice across component counts uses the BIC of the *unpenalized*
mixture log-likelihood at the fitted parameters; the structure penalty and
the prior act during estimation only, keeping BIC values comparable across
penalty families.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp, multigammaln

from .exceptions import DegenerateComponentError, SparsemixError
from .graphs import Graph
from .icf import (DEFAULT_ICF, IcfConfig, PriorSpec, ScoredStructure,
                  fit_covariance, objective_score, regularized_moments)
from .numerics import (cholesky_pd, correlation_matrix, mvn_logpdf_rows,
                       weighted_moments)
from .penalties import PenaltySpec, penalty_value
from .search import (GaConfig, StepwiseConfig, StructureEvaluator,
                     ga_search, stepwise_search)

RHO_GRID_DEFAULT = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


@dataclass(frozen=True)
class SemConfig:
    """Full fitting configuration; see the CLI for the matching flags."""

    penalty_kind: str = "bic"
    gamma: float = 1.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    search: str = "stepwise"              # stepwise | ga
    forced_graph: Optional[str] = None    # None | complete | empty
    stepwise: StepwiseConfig = StepwiseConfig()
    ga: GaConfig = GaConfig()
    icf: IcfConfig = DEFAULT_ICF
    init_method: str = "hierarchical"     # hierarchical | kmeans
    rho_grid: tuple = RHO_GRID_DEFAULT
    prior: bool = True
    prior_c: float = 0.001
    ll_tol: float = 1e-5
    max_iter: int = 200
    restarts: int = 1
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.search not in ("stepwise", "ga"):
            raise ValueError("search must be 'stepwise' or 'ga'")
        if self.forced_graph not in (None, "complete", "empty"):
            raise ValueError("forced_graph must be None, 'complete' or 'empty'")
        if self.init_method not in ("hierarchical", "kmeans"):
            raise ValueError("init_method must be 'hierarchical' or 'kmeans'")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.max_iter < 1 or self.restarts < 1 or self.threads < 1:
            raise ValueError("max_iter, restarts and threads must be >= 1")

    def penalty_spec(self, n):
        return PenaltySpec(kind=self.penalty_kind, n=float(n),
                           gamma=self.gamma, alpha=self.alpha, beta=self.beta)


@dataclass
class MixtureModel:
    tau: np.ndarray                 # (K,) mixing weights
    means: np.ndarray               # (K, V)
    comps: list                     # K ScoredStructure entries

    @property
    def k(self):
        return len(self.comps)

    @property
    def v(self):
        return self.means.shape[1]


@dataclass
class FitResult:
    model: MixtureModel
    resp: np.ndarray                # (N, K) posterior membership
    labels: np.ndarray              # (N,) row argmax of resp (0-indexed)
    ll_trace: np.ndarray            # penalized/regularized objective per cycle
    loglik: float                   # unpenalized mixture log-likelihood
    bic: float
    n_params: int
    converged: bool
    iterations: int
    k: int
    seed: int
    notes: list = field(default_factory=list)


def _child_seed(*parts):
    """Deterministic 63-bit child seed from a tuple of nonnegative ints."""
    state = np.random.SeedSequence(list(parts)).generate_state(2, dtype=np.uint32)
    return int(state.view(np.uint64)[0] >> 1)


# ---------------------------------------------------------------------------
# prior


def default_prior(pooled_scatter, k, c=0.001):
    """IW(V+2, W) with W a rescaled pooled scatter such that det(W) = c/K.

    A singular pooled scatter falls back to a multiple of the identity with
    the same determinant, flagged on the returned spec.
    """
    pooled_scatter = np.asarray(pooled_scatter, dtype=float)
    v = pooled_scatter.shape[0]
    if c <= 0 or k < 1:
        raise ValueError("need c > 0 and k >= 1")
    omega = float(v + 2)
    log_target = math.log(c / k)
    sign, logdet = np.linalg.slogdet(pooled_scatter)
    if sign > 0 and np.isfinite(logdet):
        w = pooled_scatter * math.exp((log_target - logdet) / v)
        return PriorSpec(omega=omega, W=w, c=c)
    w = math.exp(log_target / v) * np.eye(v)
    return PriorSpec(omega=omega, W=w, c=c, fallback=True)


def _iw_logpdf(sigma, prior):
    """Inverse-Wishart log-density of one covariance matrix."""
    v = prior.W.shape[0]
    omega = prior.omega
    chol_w = cholesky_pd(prior.W, name="prior scale matrix")
    logdet_w = 2.0 * float(np.log(np.diag(chol_w)).sum())
    chol_s = cholesky_pd(sigma, name="covariance")
    logdet_s = 2.0 * float(np.log(np.diag(chol_s)).sum())
    half = np.linalg.solve(chol_s, prior.W)
    tr = float(np.linalg.solve(chol_s, half.T).trace())
    return (0.5 * omega * logdet_w - 0.5 * omega * v * math.log(2.0)
            - multigammaln(0.5 * omega, v)
            - 0.5 * (omega + v + 1.0) * logdet_s - 0.5 * tr)


# ---------------------------------------------------------------------------
# initialization


def init_partition(X, k, method="hierarchical", seed=0):
    """Hard starting partition with every component non-empty."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < k:
        raise ValueError(f"cannot split {n} observations into {k} components")
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    if method == "kmeans":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        for _ in range(5):
            _, labels = kmeans2(X, k, minit="++", seed=rng)
            if np.unique(labels).size == k:
                return labels.astype(np.int64)
        # fall through to the deterministic initializer
    link = linkage(X, method="ward")
    labels = fcluster(link, t=k, criterion="maxclust") - 1
    if np.unique(labels).size != k:
        raise DegenerateComponentError(
            f"hierarchical initialization produced fewer than {k} groups")
    return labels.astype(np.int64)


def _one_hot(labels, k):
    n = labels.shape[0]
    z = np.zeros((n, k))
    z[np.arange(n), labels] = 1.0
    return z


def threshold_graphs(corr, rho_grid):
    """Unique graphs keeping pairs with |correlation| above each threshold."""
    v = corr.shape[0]
    ju, hu = np.triu_indices(v, k=1)
    acorr = np.abs(corr[ju, hu])
    out, seen = [], set()
    for rho in rho_grid:
        g = Graph(v, acorr >= rho)
        if g.key not in seen:
            seen.add(g.key)
            out.append(g)
    return out


def init_graphs(X, z, k, rho_grid=RHO_GRID_DEFAULT, penalty=None,
                icf_cfg=DEFAULT_ICF, prior=None):
    """Per-component starting structures from correlation thresholding.

    For each component, the candidate graphs keep the pairs whose absolute
    within-component correlation clears each threshold; candidates are
    fitted and the best-scoring one becomes the search starting point.
    """
    X = np.asarray(X, dtype=float)
    resp = _one_hot(np.asarray(z, dtype=np.int64), k)
    _, _, ns, scatters = m_step_weights_means(X, resp)
    out = []
    for i in range(k):
        s_use, n_use = _effective_moments(scatters[i], ns[i], prior)
        ev = StructureEvaluator(s_use, n_use, penalty, icf_cfg)
        cands = threshold_graphs(correlation_matrix(s_use), rho_grid)
        out.append(ev.best(ev.evaluate_many(cands)))
    return out


# ---------------------------------------------------------------------------
# E / M / S


def e_step(X, model):
    """Responsibilities and mixture log-likelihood, computed in log space."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    logw = np.empty((n, model.k))
    for i, comp in enumerate(model.comps):
        chol = cholesky_pd(comp.sigma, name=f"component {i + 1} covariance")
        logw[:, i] = np.log(model.tau[i]) + mvn_logpdf_rows(X, model.means[i], chol)
    norm = logsumexp(logw, axis=1)
    resp = np.exp(logw - norm[:, None])
    return resp, float(norm.sum())


def m_step_weights_means(X, resp):
    """Weights, means and per-component effective sizes and scatters."""
    X = np.asarray(X, dtype=float)
    n, _ = X.shape
    nk = resp.sum(axis=0)
    if nk.min() < 1e-8:
        raise DegenerateComponentError(
            f"component {int(nk.argmin()) + 1} is empty (weight {nk.min():.3g})")
    tau = nk / n
    means = (resp.T @ X) / nk[:, None]
    scatters = []
    for i in range(resp.shape[1]):
        _, _, scatter = weighted_moments(X, resp[:, i])
        scatters.append(scatter)
    return tau, means, nk, scatters


def _effective_moments(scatter, n, prior):
    if prior is None:
        return scatter, float(n)
    return regularized_moments(scatter, n, prior)


def _search_component(scatter, n, prior, penalty, cfg, prev, ga_seed, threads):
    """One component's S-step: search seeded at the previous structure.

    Elitism holds twice over: the search starts from (or contains) the
    previous graph refitted on the new scatter, and the previous covariance
    itself, unrefitted, is kept as a candidate so a sweep that lands in a
    worse local optimum can never push the objective down.
    """
    s_use, n_use = _effective_moments(scatter, n, prior)
    ev = StructureEvaluator(s_use, n_use, penalty, cfg.icf, threads)
    keep = ScoredStructure(
        prev.graph, prev.sigma,
        objective_score(s_use, n_use, prev.sigma, prev.graph, penalty),
        prev.converged)
    if cfg.forced_graph is not None:
        result = ev.evaluate(prev.graph)
    elif cfg.search == "stepwise":
        start = ev.evaluate(prev.graph)
        result = stepwise_search(s_use, n_use, penalty, start, cfg.stepwise,
                                 cfg.icf, threads=threads, evaluator=ev)
    else:
        seeds = [prev.graph]
        for g in threshold_graphs(correlation_matrix(s_use), cfg.rho_grid):
            if len(seeds) < cfg.ga.pop_size and g not in seeds:
                seeds.append(g)
        ga_cfg = replace(cfg.ga, seed=ga_seed)
        result = ga_search(s_use, n_use, penalty, seeds, ga_cfg, cfg.icf,
                           threads=threads, evaluator=ev)
    return ev.best([result, keep])


def s_step(scatters, ns, prior, penalty, cfg, prev_structures, ga_seeds,
           threads=1):
    """Structure search for every component; independent, so they can fan out."""
    k = len(prev_structures)
    inner = max(1, threads // k)
    tasks = [
        (scatters[i], ns[i], prior, penalty, cfg, prev_structures[i],
         ga_seeds[i], inner)
        for i in range(k)
    ]
    if threads > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=min(threads, k)) as pool:
            return list(pool.map(lambda t: _search_component(*t), tasks))
    return [_search_component(*t) for t in tasks]


# ---------------------------------------------------------------------------
# objective / scoring


def _objective_terms(model, penalty, prior):
    """Penalty and prior adjustments added to the log-likelihood."""
    adj = 0.0
    for comp in model.comps:
        if penalty is not None:
            adj -= penalty_value(penalty, comp.graph)
        if prior is not None:
            adj += _iw_logpdf(comp.sigma, prior)
    return adj


def penalized_objective(X, model, penalty, prior=None):
    """(penalized or regularized objective, unpenalized log-likelihood)."""
    _, loglik = e_step(X, model)
    return loglik + _objective_terms(model, penalty, prior), loglik


def param_count(model):
    """Free parameters: (K-1) + KV + sum_k (V + E_k)."""
    k, v = model.k, model.v
    return (k - 1) + k * v + sum(v + c.graph.edge_count() for c in model.comps)


def bic_score(fit_result, n):
    """2 * log-likelihood - n_params * log(N), from the unpenalized fit."""
    return 2.0 * fit_result.loglik - fit_result.n_params * math.log(n)


def classify(resp):
    """Row argmax; ties go to the lowest component index."""
    return np.asarray(resp).argmax(axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# driver


def _forced_structures(k, v, scatters, ns, prior, penalty, cfg):
    shape = Graph.complete(v) if cfg.forced_graph == "complete" else Graph.empty(v)
    out = []
    for i in range(k):
        s_use, n_use = _effective_moments(scatters[i], ns[i], prior)
        res = fit_covariance(s_use, shape, cfg.icf)
        score = objective_score(s_use, n_use, res.sigma, shape, penalty)
        out.append(ScoredStructure(shape, res.sigma, score, res.converged))
    return out


def _check_component_sizes(nk, v, prior, notes):
    if prior is None and nk.min() < max(0.5 * v, 2.0):
        raise DegenerateComponentError(
            f"component {int(nk.argmin()) + 1} has {nk.min():.2f} effective "
            "observations and no regularizing prior")
    if prior is not None and nk.min() < max(0.5 * v, 2.0):
        note = (f"component {int(nk.argmin()) + 1} small "
                f"({nk.min():.2f} effective observations); prior keeps it fitted")
        if note not in notes:
            notes.append(note)


def _fit_once(X, k, cfg, restart):
    n, v = X.shape
    penalty = cfg.penalty_spec(n)
    notes = []

    labels0 = init_partition(X, k, cfg.init_method,
                             seed=_child_seed(cfg.seed, k, restart, 0))
    resp = _one_hot(labels0, k)

    prior = None
    if cfg.prior:
        _, _, pooled = weighted_moments(X, np.ones(n))
        prior = default_prior(pooled, k, cfg.prior_c)
        if prior.fallback:
            notes.append("pooled scatter singular: identity prior scale used")

    tau, means, nk, scatters = m_step_weights_means(X, resp)
    _check_component_sizes(nk, v, prior, notes)
    if cfg.forced_graph is not None:
        comps = _forced_structures(k, v, scatters, ns=nk, prior=prior,
                                   penalty=penalty, cfg=cfg)
    else:
        comps = init_graphs(X, labels0, k, cfg.rho_grid, penalty, cfg.icf, prior)
    model = MixtureModel(tau, means, comps)

    resp, loglik = e_step(X, model)
    trace = [loglik + _objective_terms(model, penalty, prior)]
    converged = False
    iterations = 0
    for it in range(1, cfg.max_iter + 1):
        # resp is the E step at the current model; update the parameters
        tau, means, nk, scatters = m_step_weights_means(X, resp)
        _check_component_sizes(nk, v, prior, notes)
        ga_seeds = [_child_seed(cfg.seed, k, restart, it, i) for i in range(k)]
        comps = s_step(scatters, nk, prior, penalty, cfg, model.comps,
                       ga_seeds, cfg.threads)
        model = MixtureModel(tau, means, comps)
        resp, loglik = e_step(X, model)
        trace.append(loglik + _objective_terms(model, penalty, prior))
        iterations = it
        gain = trace[-1] - trace[-2]
        if gain < cfg.ll_tol * max(1.0, abs(trace[-2])):
            converged = True
            break

    if not np.isfinite(loglik):
        raise SparsemixError(f"non-finite log-likelihood ({loglik}) at K={k}")
    nu = param_count(model)
    result = FitResult(
        model=model, resp=resp, labels=classify(resp),
        ll_trace=np.asarray(trace), loglik=loglik,
        bic=2.0 * loglik - nu * math.log(n), n_params=nu,
        converged=converged, iterations=iterations, k=k, seed=cfg.seed,
        notes=notes)
    return result


def fit(X, k, cfg=SemConfig()):
    """Fit a K-component mixture; the best of ``cfg.restarts`` runs wins."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-D array")
    if not np.isfinite(X).all():
        raise ValueError("data contains non-finite values")
    if X.shape[0] <= k:
        raise ValueError(f"need more than {k} observations to fit K={k}")
    best = None
    for restart in range(cfg.restarts):
        result = _fit_once(X, k, cfg, restart)
        if best is None or result.ll_trace[-1] > best.ll_trace[-1]:
            best = result
    return best


def select_model(X, k_range, cfg=SemConfig()):
    """Fit every K in ``k_range`` and keep the BIC argmax.

    Returns (best fit, table) where the table has one row per K with its
    BIC or the failure reason. Raises if every fit failed.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty component-count range")

    parallel = cfg.threads > 1 and len(ks) > 1
    inner = replace(cfg, threads=max(1, cfg.threads // len(ks))) if parallel else cfg

    def run(k):
        try:
            return k, fit(X, k, inner), None
        except (SparsemixError, ValueError) as exc:
            return k, None, str(exc)

    if parallel:
        with ThreadPoolExecutor(max_workers=min(cfg.threads, len(ks))) as pool:
            rows = list(pool.map(run, ks))
    else:
        rows = [run(k) for k in ks]

    table = []
    best = None
    for k, res, err in rows:
        if res is None:
            table.append({"k": k, "bic": None, "error": err})
            continue
        table.append({
            "k": k, "bic": res.bic, "n_params": res.n_params,
            "converged": res.converged,
            "edges": [c.graph.edge_count() for c in res.model.comps],
        })
        if best is None or res.bic > best.bic:
            best = res
    if best is None:
        raise SparsemixError("all component counts failed to fit")
    return best, table
