"""Clustering and graph-recovery metrics."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graphs import pair_count


@dataclass
class MetricReport:
    ari: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]
    k_hat: Optional[int]


def adjusted_rand_index(a, b):
    """Chance-corrected pair-counting agreement between two partitions."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError("label vectors differ in length")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / comb2(n)
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        # both partitions trivial (all singletons or a single block)
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def _rates_against(est, truth):
    """(false positive rate, false negative rate) of one estimated graph
    against one truth graph; degenerate denominators count as perfect."""
    t = pair_count(truth.v)
    e_true = truth.edge_count()
    false_edges = int((est.bits & ~truth.bits).sum())
    missed = int((~est.bits & truth.bits).sum())
    fpr = false_edges / (t - e_true) if t > e_true else 0.0
    fnr = missed / e_true if e_true > 0 else 0.0
    return fpr, fnr


def graph_recovery_rates(estimated, truth):
    """Component-matched average false positive and false negative rates.

    Each estimated graph takes its own minimum over the truth graphs,
    separately for the two rates (the minima may come from different truth
    components), and the minima are averaged over the estimated graphs.
    """
    if not estimated or not truth:
        raise ValueError("need at least one graph on each side")
    v = truth[0].v
    if any(g.v != v for g in list(estimated) + list(truth)):
        raise ValueError("all graphs must share the same number of variables")
    fprs, fnrs = [], []
    for est in estimated:
        pair_rates = [_rates_against(est, tr) for tr in truth]
        fprs.append(min(r[0] for r in pair_rates))
        fnrs.append(min(r[1] for r in pair_rates))
    return float(np.mean(fprs)), float(np.mean(fnrs))
