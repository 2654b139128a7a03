import math
from itertools import product

import numpy as np
import pytest

from _utils import rand_spd
from sparsemix.exceptions import DegenerateComponentError
from sparsemix.graphs import Graph, pair_count
from sparsemix.icf import IcfConfig, ScoredStructure
from sparsemix.metrics import adjusted_rand_index, graph_recovery_rates
from sparsemix.penalties import PenaltySpec
from sparsemix.search import StructureEvaluator, stepwise_search, StepwiseConfig
from sparsemix.sem import (FitResult, MixtureModel, SemConfig, bic_score,
                           classify, default_prior, e_step, fit, init_graphs,
                           init_partition, m_step_weights_means,
                           param_count, penalized_objective, s_step,
                           select_model)
from sparsemix.simulate import sample_mixture

INF = float("inf")


# ---------------------------------------------------------------------------
# prior


def test_default_prior_identity_scatter():
    prior = default_prior(np.eye(2), k=1, c=0.001)
    assert prior.omega == 4.0
    assert np.allclose(prior.W, math.sqrt(0.001) * np.eye(2), atol=1e-12)
    assert np.linalg.det(prior.W) == pytest.approx(0.001, rel=1e-10)


def test_default_prior_diagonal_example():
    prior = default_prior(np.diag([4.0, 1.0]), k=1, c=1.0)
    assert np.allclose(prior.W, np.diag([2.0, 0.5]), atol=1e-12)
    assert np.linalg.det(prior.W) == pytest.approx(1.0, rel=1e-10)


def test_default_prior_det_invariant():
    rng = np.random.default_rng(0)
    for _ in range(25):
        v = int(rng.integers(2, 8))
        k = int(rng.integers(1, 5))
        c = float(rng.uniform(1e-4, 2.0))
        prior = default_prior(rand_spd(rng, v), k, c)
        assert np.linalg.det(prior.W) == pytest.approx(c / k, rel=1e-8)
        assert not prior.fallback


def test_default_prior_singular_fallback():
    x = np.outer([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])  # rank one
    prior = default_prior(x, k=2, c=0.01)
    assert prior.fallback
    assert np.linalg.det(prior.W) == pytest.approx(0.005, rel=1e-10)


# ---------------------------------------------------------------------------
# initialization


def test_init_partition_trivial_cases():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((10, 2))
    assert np.array_equal(init_partition(X, 1), np.zeros(10, dtype=int))
    singletons = init_partition(X, 10)
    assert np.unique(singletons).size == 10
    with pytest.raises(ValueError):
        init_partition(X, 11)


@pytest.mark.parametrize("method", ["hierarchical", "kmeans"])
def test_init_partition_separated_clouds(method):
    rng = np.random.default_rng(2)
    a = rng.standard_normal((30, 3)) - 10.0
    b = rng.standard_normal((30, 3)) + 10.0
    X = np.vstack([a, b])
    truth = np.repeat([0, 1], 30)
    labels = init_partition(X, 2, method=method, seed=0)
    assert adjusted_rand_index(labels, truth) == 1.0


def test_init_partition_deterministic():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((50, 4))
    for method in ("hierarchical", "kmeans"):
        a = init_partition(X, 3, method=method, seed=9)
        b = init_partition(X, 3, method=method, seed=9)
        assert np.array_equal(a, b)


def test_init_graphs_two_candidate_enumeration():
    # One component whose scatter has correlation 0.6: the 0.4 threshold
    # gives the single-edge graph, the 0.7 threshold the empty graph; the
    # winner must match direct evaluation of the two candidates.
    rng = np.random.default_rng(4)
    target = np.array([[1.0, 0.6], [0.6, 1.0]])
    X = rng.standard_normal((400, 2)) @ np.linalg.cholesky(target).T
    z = np.zeros(400, dtype=int)
    n = 400.0
    pen = PenaltySpec(kind="bic", n=n)
    out = init_graphs(X, z, 1, rho_grid=(0.4, 0.7), penalty=pen)
    scatter = np.cov(X.T, bias=True)
    ev = StructureEvaluator(scatter, n, pen)
    best = ev.best(ev.evaluate_many([Graph.complete(2), Graph.empty(2)]))
    assert out[0].graph == best.graph
    assert out[0].score == pytest.approx(best.score, rel=1e-12)


def test_init_graphs_diagonal_scatter_gives_empty():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((300, 3)) * np.array([1.0, 2.0, 0.5])
    out = init_graphs(X, np.zeros(300, dtype=int), 1,
                      penalty=PenaltySpec(kind="bic", n=300.0))
    assert out[0].graph.edge_count() <= 1  # sampling noise stays below 0.4


def test_init_graphs_unreachable_threshold_is_empty():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((100, 3))
    out = init_graphs(X, np.zeros(100, dtype=int), 1, rho_grid=(1.0,),
                      penalty=PenaltySpec(kind="bic", n=100.0))
    assert out[0].graph == Graph.empty(3)


# ---------------------------------------------------------------------------
# E / M steps


def _single_comp_model(mean, var):
    g = Graph.empty(1)
    return MixtureModel(np.array([1.0]), np.array([[mean]]),
                        [ScoredStructure(g, np.array([[var]]), 0.0)])


def test_e_step_single_component():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((20, 1))
    resp, _ = e_step(X, _single_comp_model(0.0, 1.0))
    assert np.array_equal(resp, np.ones((20, 1)))


def test_e_step_identical_components():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((15, 2))
    g = Graph.empty(2)
    comp = ScoredStructure(g, np.eye(2), 0.0)
    model = MixtureModel(np.array([0.5, 0.5]), np.zeros((2, 2)), [comp, comp])
    resp, _ = e_step(X, model)
    assert np.allclose(resp, 0.5, atol=1e-12)


def test_e_step_equidistant_point():
    g = Graph.empty(1)
    model = MixtureModel(
        np.array([0.5, 0.5]), np.array([[0.0], [10.0]]),
        [ScoredStructure(g, np.eye(1), 0.0), ScoredStructure(g, np.eye(1), 0.0)])
    resp, _ = e_step(np.array([[5.0]]), model)
    assert np.allclose(resp, 0.5, atol=1e-12)


def test_e_step_rows_sum_to_one():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((50, 3)) * 5
    g = Graph.empty(3)
    comps = [ScoredStructure(g, np.eye(3) * s, 0.0) for s in (0.5, 2.0)]
    model = MixtureModel(np.array([0.3, 0.7]),
                         rng.standard_normal((2, 3)), comps)
    resp, _ = e_step(X, model)
    assert np.abs(resp.sum(axis=1) - 1.0).max() < 1e-10


def test_m_step_hard_assignment():
    X = np.array([[0.0, 0.0], [2.0, 0.0], [10.0, 1.0], [12.0, 1.0]])
    resp = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
    tau, means, nk, scatters = m_step_weights_means(X, resp)
    assert np.allclose(tau, [0.5, 0.5])
    assert np.allclose(means, [[1.0, 0.0], [11.0, 1.0]])
    assert np.allclose(scatters[0], [[1.0, 0.0], [0.0, 0.0]])


def test_m_step_uniform_responsibilities():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((30, 2))
    resp = np.full((30, 3), 1.0 / 3.0)
    tau, means, _, _ = m_step_weights_means(X, resp)
    assert np.allclose(tau, 1.0 / 3.0)
    assert np.allclose(means, np.tile(X.mean(axis=0), (3, 1)))


def test_m_step_column_sums():
    resp = np.array([[1, 0], [1, 0], [1, 0], [0, 1]], dtype=float)
    tau, _, nk, _ = m_step_weights_means(np.zeros((4, 2)), resp)
    assert np.allclose(tau, [0.75, 0.25])
    assert np.allclose(nk, [3.0, 1.0])


def test_m_step_empty_component_raises():
    resp = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DegenerateComponentError):
        m_step_weights_means(np.zeros((2, 2)), resp)


# ---------------------------------------------------------------------------
# S step


def test_s_step_fixed_graph_refits_on_new_scatter():
    rng = np.random.default_rng(11)
    v = 3
    old_scatter = rand_spd(rng, v)
    new_scatter = rand_spd(rng, v)
    g = Graph.empty(v)
    prev = ScoredStructure(g, np.diag(np.diag(old_scatter)), -1e9)
    cfg = SemConfig(penalty_kind="none", forced_graph="empty", prior=False)
    out = s_step([new_scatter], [50.0], None, PenaltySpec(kind="none"),
                 cfg, [prev], ga_seeds=[0])
    assert np.array_equal(out[0].sigma, np.diag(np.diag(new_scatter)))


def test_s_step_single_component_delegates_to_stepwise():
    rng = np.random.default_rng(12)
    chol = np.linalg.cholesky(np.array([[1.0, 0.8, 0.0],
                                        [0.8, 1.0, 0.0],
                                        [0.0, 0.0, 1.0]]))
    X = rng.standard_normal((500, 3)) @ chol.T
    scatter = np.cov(X.T, bias=True)
    n = 500.0
    pen = PenaltySpec(kind="bic", n=n)
    cfg = SemConfig(penalty_kind="bic", prior=False,
                    stepwise=StepwiseConfig(occam_c=INF))
    ev = StructureEvaluator(scatter, n, pen, cfg.icf)
    start = ev.evaluate(Graph.empty(3))
    direct = stepwise_search(scatter, n, pen, start, cfg.stepwise, cfg.icf)
    out = s_step([scatter], [n], None, pen, cfg, [start], ga_seeds=[0])
    assert out[0].graph == direct.graph
    assert out[0].score == pytest.approx(direct.score, rel=1e-12)


def test_s_step_orthogonal_components_match_exhaustive():
    rng = np.random.default_rng(13)
    cov1 = np.array([[1.0, 0.8, 0.0], [0.8, 1.0, 0.0], [0.0, 0.0, 1.0]])
    cov2 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.8], [0.0, 0.8, 1.0]])
    x1 = rng.standard_normal((500, 3)) @ np.linalg.cholesky(cov1).T
    x2 = rng.standard_normal((500, 3)) @ np.linalg.cholesky(cov2).T
    scatters = [np.cov(x1.T, bias=True), np.cov(x2.T, bias=True)]
    ns = [500.0, 500.0]
    pen = PenaltySpec(kind="bic", n=1000.0)
    cfg = SemConfig(penalty_kind="bic", prior=False,
                    stepwise=StepwiseConfig(occam_c=INF))
    prev = [StructureEvaluator(scatters[i], ns[i], pen, cfg.icf)
            .evaluate(Graph.empty(3)) for i in range(2)]
    out = s_step(scatters, ns, None, pen, cfg, prev, ga_seeds=[0, 1])
    for i, expect in enumerate([Graph.from_edges(3, [(0, 1)]),
                                Graph.from_edges(3, [(1, 2)])]):
        ev = StructureEvaluator(scatters[i], ns[i], pen, cfg.icf)
        allg = [Graph(3, np.array(b, dtype=bool))
                for b in product([False, True], repeat=3)]
        best = ev.best(ev.evaluate_many(allg))
        assert best.graph == expect
        assert out[i].graph == expect


# ---------------------------------------------------------------------------
# fit and model selection


def _spherical_sample(rng, n, v, mean=0.0):
    return rng.standard_normal((n, v)) + mean


def test_fit_saturated_single_gaussian_closed_form():
    rng = np.random.default_rng(14)
    X = _spherical_sample(rng, 120, 3)
    n, v = X.shape
    cfg = SemConfig(penalty_kind="none", forced_graph="complete", prior=False,
                    icf=IcfConfig(tol=1e-12, max_sweeps=500))
    res = fit(X, 1, cfg)
    s = np.cov(X.T, bias=True)
    expected = -0.5 * n * (v * math.log(2 * math.pi)
                           + np.linalg.slogdet(s)[1] + v)
    assert res.loglik == pytest.approx(expected, rel=1e-6)
    # BIC closed form for the saturated model
    nu = v + v * (v + 1) // 2
    assert res.n_params == nu
    assert res.bic == pytest.approx(2 * expected - nu * math.log(n), rel=1e-6)


def test_fit_empty_graph_equals_univariate_fits():
    rng = np.random.default_rng(15)
    X = _spherical_sample(rng, 90, 4) * np.array([1.0, 2.0, 0.5, 1.5])
    n, v = X.shape
    cfg = SemConfig(penalty_kind="none", forced_graph="empty", prior=False,
                    icf=IcfConfig(tol=1e-12, max_sweeps=500))
    res = fit(X, 1, cfg)
    expected = sum(
        -0.5 * n * (math.log(2 * math.pi) + math.log(X[:, j].var()) + 1.0)
        for j in range(v))
    assert res.loglik == pytest.approx(expected, rel=1e-6)


def test_fit_two_component_simulation_small_v():
    # V=4: perfect classification, and the fitted structures must equal the
    # exhaustive per-component optimum of the penalized objective. (At this
    # dimension the default ER penalty legitimately admits a sampling-noise
    # edge on many draws, so near-emptiness is asserted at V=10 below.)
    v = 4
    cov = np.eye(v)
    means = np.array([[-5.0] * v, [5.0] * v])
    X, truth = sample_mixture([0.5, 0.5], [cov, cov], means, 400, seed=3)
    cfg = SemConfig(penalty_kind="er", search="stepwise", seed=1)
    res = fit(X, 2, cfg)
    assert adjusted_rand_index(res.labels, truth) >= 0.99
    assert np.all(np.diff(res.ll_trace) >= -1e-7)
    assert np.abs(res.resp.sum(axis=1) - 1.0).max() < 1e-10

    from sparsemix.icf import regularized_moments
    from sparsemix.numerics import weighted_moments

    _, _, nk, scatters = m_step_weights_means(X, res.resp)
    _, _, pooled = weighted_moments(X, np.ones(X.shape[0]))
    prior = default_prior(pooled, 2, cfg.prior_c)
    pen = cfg.penalty_spec(X.shape[0])
    allg = [Graph(v, np.array(b, dtype=bool))
            for b in product([False, True], repeat=pair_count(v))]
    for i in range(2):
        s_use, n_use = regularized_moments(scatters[i], nk[i], prior)
        ev = StructureEvaluator(s_use, n_use, pen, cfg.icf)
        best = ev.best(ev.evaluate_many(allg))
        assert res.model.comps[i].graph == best.graph


def test_fit_two_component_simulation_recovers_empty_graphs():
    v = 10
    cov = np.eye(v)
    g = Graph.empty(v)
    means = np.array([[-5.0] * v, [5.0] * v])
    X, truth = sample_mixture([0.5, 0.5], [cov, cov], means, 400, seed=3)
    cfg = SemConfig(penalty_kind="er", search="stepwise", seed=1)
    res = fit(X, 2, cfg)
    assert adjusted_rand_index(res.labels, truth) >= 0.99
    fpr, fnr = graph_recovery_rates([c.graph for c in res.model.comps], [g, g])
    assert fpr <= 0.1
    assert fnr == 0.0  # empty truth: missing-edge rate is zero by convention


def test_fit_matches_independent_plain_em():
    # complete graphs + no penalty must reproduce unconstrained Gaussian EM
    rng = np.random.default_rng(16)
    X = np.vstack([rng.standard_normal((60, 2)) - 2.0,
                   rng.standard_normal((60, 2)) + 2.0])
    n = X.shape[0]
    cfg = SemConfig(penalty_kind="none", forced_graph="complete", prior=False,
                    icf=IcfConfig(tol=1e-12, max_sweeps=500), ll_tol=1e-9)
    res = fit(X, 2, cfg)

    # reference EM, written without any package machinery
    labels = init_partition(X, 2)  # same deterministic initialization
    z = np.zeros((n, 2))
    z[np.arange(n), labels] = 1.0
    ll_prev = None
    for _ in range(500):
        nk = z.sum(axis=0)
        tau = nk / n
        mu = (z.T @ X) / nk[:, None]
        covs = []
        for i in range(2):
            xc = X - mu[i]
            covs.append((xc * z[:, i:i + 1]).T @ xc / nk[i])
        logw = np.empty((n, 2))
        for i in range(2):
            diff = X - mu[i]
            inv = np.linalg.inv(covs[i])
            quad = np.einsum("ij,jk,ik->i", diff, inv, diff)
            logw[:, i] = (np.log(tau[i]) - 0.5 * (2 * np.log(2 * np.pi)
                          + np.linalg.slogdet(covs[i])[1] + quad))
        m = logw.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logw - m).sum(axis=1))
        z = np.exp(logw - lse[:, None])
        ll = lse.sum()
        if ll_prev is not None and abs(ll - ll_prev) < 1e-9 * max(1, abs(ll)):
            break
        ll_prev = ll

    assert abs(res.loglik - ll) / n < 1e-6


def test_fit_trace_monotone_and_rows_stochastic():
    rng = np.random.default_rng(17)
    X = np.vstack([rng.standard_normal((80, 3)),
                   rng.standard_normal((80, 3)) + 4.0])
    for kind in ("bic", "er", "ebic", "pl"):
        cfg = SemConfig(penalty_kind=kind, seed=2)
        res = fit(X, 2, cfg)
        assert np.all(np.diff(res.ll_trace) >= -1e-7)
        assert np.abs(res.resp.sum(axis=1) - 1.0).max() < 1e-10


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit(np.ones((3, 2)) * np.nan, 1)
    with pytest.raises(ValueError):
        fit(np.ones((2, 2)), 3)


def test_param_count_and_bic_formula():
    g_e = Graph.empty(3)
    comps = [ScoredStructure(g_e, np.eye(3), 0.0)]
    m1 = MixtureModel(np.array([1.0]), np.zeros((1, 3)), comps)
    assert param_count(m1) == 6  # 0 + 3 + (3 + 0)

    g1 = Graph.from_edges(3, [(0, 1)])
    m2 = MixtureModel(np.array([0.5, 0.5]), np.zeros((2, 3)),
                      [ScoredStructure(g1, np.eye(3), 0.0),
                       ScoredStructure(g_e, np.eye(3), 0.0)])
    assert param_count(m2) == 14  # 1 + 6 + (3+1) + (3+0)

    for k, v in ((1, 4), (3, 5)):
        gc = Graph.complete(v)
        comps = [ScoredStructure(gc, np.eye(v), 0.0) for _ in range(k)]
        m = MixtureModel(np.full(k, 1.0 / k), np.zeros((k, v)), comps)
        assert param_count(m) == (k - 1) + k * v + k * v * (v + 1) // 2

    res = FitResult(model=m1, resp=np.ones((10, 1)),
                    labels=np.zeros(10, dtype=int), ll_trace=np.zeros(1),
                    loglik=-123.0, bic=0.0, n_params=6, converged=True,
                    iterations=1, k=1, seed=0)
    assert bic_score(res, 10) == pytest.approx(2 * -123.0 - 6 * math.log(10))


def test_classify():
    assert classify(np.array([[0.0, 1.0], [1.0, 0.0]])).tolist() == [1, 0]
    assert classify(np.array([[0.5, 0.5]])).tolist() == [0]  # tie: lowest index
    assert classify(np.array([[0.2, 0.3, 0.5]])).tolist() == [2]


def test_classify_monotone_invariance():
    rng = np.random.default_rng(18)
    resp = rng.dirichlet(np.ones(4), size=50)
    transformed = np.exp(3.0 * resp) + resp ** 3
    assert np.array_equal(classify(resp), classify(transformed))


def test_select_model_single_k():
    rng = np.random.default_rng(19)
    X = _spherical_sample(rng, 60, 2)
    best, table = select_model(X, [1], SemConfig(seed=0))
    assert best.k == 1
    assert len(table) == 1 and table[0]["k"] == 1


def test_select_model_prefers_one_component_on_spherical_data():
    rng = np.random.default_rng(20)
    X = _spherical_sample(rng, 500, 3)
    best, table = select_model(X, [1, 2], SemConfig(penalty_kind="bic", seed=0))
    assert best.k == 1
    assert len(table) == 2


def test_penalized_objective_consistency():
    rng = np.random.default_rng(21)
    X = rng.standard_normal((40, 2))
    cfg = SemConfig(penalty_kind="bic", prior=False, seed=0)
    res = fit(X, 1, cfg)
    obj, loglik = penalized_objective(X, res.model, cfg.penalty_spec(40), None)
    assert loglik == pytest.approx(res.loglik, rel=1e-12)
    assert obj == pytest.approx(res.ll_trace[-1], rel=1e-9)
