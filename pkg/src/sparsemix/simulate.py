"""Synthetic mixtures with known sparse covariance structures.

Four scenario families, each producing one (graph, covariance) pair per
component:

  1  one clique of size floor(V/2), placed top / center / bottom,
  2  Erdos-Renyi graphs at per-component connection probabilities,
  3  hub graphs: each non-hub connects to randomly chosen hubs,
  4  mixed: block-diagonal cliques, an ER graph, and a tridiagonal band.

Except for the band component, covariances are obtained by projecting a
0.9-equicorrelation pseudo-target onto the graph with the constrained
sweep, so entries on sparse patterns come out attenuated relative to 0.9.
The band component is built directly with 0.5 first off-diagonals, which is
positive definite for every size.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graphs import Graph, pair_count, random_er
from .icf import IcfConfig, fit_covariance
from .numerics import cholesky_pd

_PROJECT_CFG = IcfConfig(tol=1e-10, max_sweeps=500)

DEFAULT_TAU = (0.2, 0.5, 0.3)


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    v: int
    k: int = 3
    seed: int = 0
    er_probs: tuple = (0.3, 0.2, 0.1)
    hub_sparsity: tuple = (0.7, 0.8, 0.9)
    toeplitz_band: float = 0.5
    block_size: Optional[int] = None  # scenario 4 blocks; scenario 1 uses v//2

    def __post_init__(self):
        if self.id not in (1, 2, 3, 4):
            raise ValueError("scenario id must be 1..4")
        if self.v < 4:
            raise ValueError("need at least four variables")
        if self.k < 1:
            raise ValueError("need at least one component")


def _pseudo_target(v):
    target = np.full((v, v), 0.9)
    np.fill_diagonal(target, 1.0)
    return target


def _project(graph):
    """Covariance in the graph's cone closest (in likelihood) to the
    0.9-equicorrelation target."""
    res = fit_covariance(_pseudo_target(graph.v), graph, _PROJECT_CFG)
    return res.sigma


def _clique_graph(v, start, size):
    return Graph.from_edges(
        v, [(j, h) for j in range(start, start + size)
            for h in range(j + 1, start + size)])


def _scenario1_graphs(spec):
    size = spec.v // 2
    starts = [0, (spec.v - size) // 2, spec.v - size]
    return [_clique_graph(spec.v, starts[i % 3], size) for i in range(spec.k)]


def _scenario2_graphs(spec, rng):
    probs = spec.er_probs
    return [random_er(spec.v, probs[i % len(probs)], rng) for i in range(spec.k)]


def _hub_graph(v, sparsity, rng):
    """Connect each (hub, non-hub) pair independently so the expected edge
    density over all pairs matches 1 - sparsity."""
    n_hubs = math.ceil(v / 2)
    hubs = np.sort(rng.choice(v, size=n_hubs, replace=False))
    hub_set = set(hubs.tolist())
    others = [j for j in range(v) if j not in hub_set]
    target_edges = (1.0 - sparsity) * pair_count(v)
    q = min(1.0, target_edges / (len(hubs) * len(others)))
    edges = [(h, o) for h in hubs.tolist() for o in others if rng.random() < q]
    return Graph.from_edges(v, edges)


def _scenario3_graphs(spec, rng):
    sp = spec.hub_sparsity
    return [_hub_graph(spec.v, sp[i % len(sp)], rng) for i in range(spec.k)]


def _block_diag_graph(v, block):
    edges = []
    for start in range(0, v, block):
        stop = min(start + block, v)
        edges.extend((j, h) for j in range(start, stop)
                     for h in range(j + 1, stop))
    return Graph.from_edges(v, edges)


def _band_graph(v):
    return Graph.from_edges(v, [(j, j + 1) for j in range(v - 1)])


def _band_covariance(v, band):
    sigma = np.eye(v)
    idx = np.arange(v - 1)
    sigma[idx, idx + 1] = band
    sigma[idx + 1, idx] = band
    cholesky_pd(sigma, name="band covariance")
    return sigma


def _scenario4_pairs(spec, rng):
    block = spec.block_size or 5
    pairs = []
    kinds = ["block", "er", "band"]
    for i in range(spec.k):
        kind = kinds[i % 3]
        if kind == "block":
            g = _block_diag_graph(spec.v, block)
            pairs.append((g, _project(g)))
        elif kind == "er":
            g = random_er(spec.v, 0.2, rng)
            pairs.append((g, _project(g)))
        else:
            pairs.append((_band_graph(spec.v),
                          _band_covariance(spec.v, spec.toeplitz_band)))
    return pairs


def scenario_components(spec):
    """K (graph, covariance) pairs; deterministic in the spec's seed."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, spec.id]))
    if spec.id == 1:
        graphs = _scenario1_graphs(spec)
    elif spec.id == 2:
        graphs = _scenario2_graphs(spec, rng)
    elif spec.id == 3:
        graphs = _scenario3_graphs(spec, rng)
    else:
        return _scenario4_pairs(spec, rng)
    return [(g, _project(g)) for g in graphs]


def component_means(spec):
    """Component means drawn uniformly in (-(i+1), i+1) per coordinate."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 104]))
    return np.vstack([rng.uniform(-(i + 1.0), i + 1.0, size=spec.v)
                      for i in range(spec.k)])


def sample_mixture(tau, components, means, n, seed=0):
    """Draw (X, labels) from the mixture; bit-reproducible under the seed.

    ``components`` holds per-component covariances (or (graph, cov) pairs).
    """
    tau = np.asarray(tau, dtype=float)
    if abs(tau.sum() - 1.0) > 1e-9 or np.any(tau <= 0):
        raise ValueError("mixing weights must be positive and sum to 1")
    covs = [c[1] if isinstance(c, tuple) else c for c in components]
    means = np.asarray(means, dtype=float)
    if not (len(covs) == tau.size == means.shape[0]):
        raise ValueError("components, weights and means disagree in count")
    v = means.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    labels = rng.choice(tau.size, size=n, p=tau)
    noise = rng.standard_normal((n, v))
    chols = [cholesky_pd(c, name="component covariance") for c in covs]
    X = np.empty((n, v))
    for i in range(tau.size):
        sel = labels == i
        X[sel] = means[i] + noise[sel] @ chols[i].T
    return X, labels.astype(np.int64)


def scenario_dataset(spec, n, tau=DEFAULT_TAU):
    """Convenience bundle: (X, labels, graphs, covariances, means)."""
    if len(tau) != spec.k:
        raise ValueError("mixing-weight length must equal the component count")
    pairs = scenario_components(spec)
    means = component_means(spec)
    X, labels = sample_mixture(tau, pairs, means, n, seed=spec.seed)
    return X, labels, [g for g, _ in pairs], [s for _, s in pairs], means
