"""Combinatorial search over graph structures.

Two strategies, both maximizing the penalized covariance objective of
``icf.objective_score`` for a fixed scatter matrix:

* ``stepwise_search`` alternates single-edge addition and removal passes,
  pruning flips whose score fell too far below the pass optimum (Occam's
  window with constant C) from later passes of the same type.
* ``ga_search`` evolves a population of adjacency bitstrings with weighted
  rank selection, single-point crossover, single-bit mutation and elitism.

Every evaluated bitstring is memoized within a search call, candidate fits
run through an order-preserving map (optionally threaded), and all ties are
broken toward the lexicographically smallest bitstring, so results do not
depend on the worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, pair_count, random_er
from .icf import DEFAULT_ICF, ScoredStructure, fit_covariance, objective_score
from .penalties import default_er_alpha


@dataclass(frozen=True)
class StepwiseConfig:
    occam_c: float = 50.0
    max_passes: int = 100

    def __post_init__(self):
        if self.occam_c < 0:
            raise ValueError("occam_c must be nonnegative")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")


@dataclass(frozen=True)
class GaConfig:
    pop_size: int = 50
    p_crossover: float = 0.8
    p_mutation: float = 0.2
    stall_generations: int = 100
    max_generations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 4:
            raise ValueError("pop_size must be at least 4")
        for p in (self.p_crossover, self.p_mutation):
            if not 0.0 <= p <= 1.0:
                raise ValueError("operator probabilities must lie in [0, 1]")


def _is_better(score, key, best_score, best_key):
    """Strictly better: higher score, or equal score and smaller bitstring."""
    if score != best_score:
        return score > best_score
    return key < best_key


def _map_ordered(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


class StructureEvaluator:
    """Memoized (graph -> fitted covariance, score) for one scatter matrix."""

    def __init__(self, scatter, n, penalty, icf_cfg=DEFAULT_ICF, threads=1):
        self.scatter = np.asarray(scatter, dtype=float)
        self.n = float(n)
        self.penalty = penalty
        self.icf_cfg = icf_cfg
        self.threads = threads
        self.cache = {}

    def _fit(self, graph):
        res = fit_covariance(self.scatter, graph, self.icf_cfg)
        score = objective_score(self.scatter, self.n, res.sigma, graph, self.penalty)
        return ScoredStructure(graph, res.sigma, score, res.converged)

    def evaluate(self, graph):
        hit = self.cache.get(graph.key)
        if hit is None:
            hit = self._fit(graph)
            self.cache[graph.key] = hit
        return hit

    def evaluate_many(self, graphs):
        """Ordered batch evaluation; only cache misses are fitted."""
        missing, seen = [], set()
        for g in graphs:
            if g.key not in self.cache and g.key not in seen:
                seen.add(g.key)
                missing.append(g)
        for res in _map_ordered(self._fit, missing, self.threads):
            self.cache[res.graph.key] = res
        return [self.cache[g.key] for g in graphs]

    def best(self, structures):
        """Deterministic argmax with the bitstring tie-break."""
        top = structures[0]
        for s in structures[1:]:
            if _is_better(s.score, s.graph.key, top.score, top.graph.key):
                top = s
        return top


def occam_filter(deltas, c):
    """Edges whose score deficit against the pass optimum is within c."""
    return {e for e, d in deltas.items() if d <= c}


def stepwise_search(scatter, n, penalty, start, cfg=StepwiseConfig(),
                    icf_cfg=DEFAULT_ICF, threads=1, evaluator=None):
    """Greedy single-edge-flip search from ``start``.

    ``start`` must already be scored against (scatter, n, penalty). Addition
    accepts only strict improvements; removal also accepts ties, preferring
    the sparser structure. A pass evaluates every legal flip that survived
    the last window of its kind; flips falling more than ``cfg.occam_c``
    below the pass optimum are not reconsidered (until the edge itself is
    flipped). Stops when one full addition+removal cycle changes nothing.
    """
    ev = evaluator or StructureEvaluator(scatter, n, penalty, icf_cfg, threads)
    t = pair_count(start.graph.v)
    pruned = {"add": set(), "remove": set()}
    current = start

    def run_pass(mode):
        nonlocal current
        present = current.graph.bits
        legal = [i for i in range(t)
                 if (not present[i] if mode == "add" else present[i])]
        candidates = [i for i in legal if i not in pruned[mode]]
        if not candidates:
            return False
        scored = ev.evaluate_many([current.graph.flip(i) for i in candidates])
        best = ev.best(scored)
        deltas = {i: best.score - s.score for i, s in zip(candidates, scored)}
        survivors = occam_filter(deltas, cfg.occam_c)
        pruned[mode].update(i for i in candidates if i not in survivors)
        accept = (best.score > current.score if mode == "add"
                  else best.score >= current.score)
        if accept:
            flipped = next(i for i, s in zip(candidates, scored) if s is best)
            pruned["add"].discard(flipped)
            pruned["remove"].discard(flipped)
            current = best
            return True
        return False

    passes = 0
    while passes < cfg.max_passes:
        changed = run_pass("add")
        passes += 1
        if passes < cfg.max_passes:
            changed = run_pass("remove") or changed
            passes += 1
        if not changed:
            break
    return current


def _pack_rows(pop):
    return [np.packbits(row).tobytes() for row in pop]


def ga_search(scatter, n, penalty, seeds, cfg, icf_cfg=DEFAULT_ICF,
              threads=1, evaluator=None):
    """Evolutionary search over adjacency bitstrings.

    ``seeds`` (graphs or scored structures) enter the initial population;
    the remainder is filled with Erdos-Renyi draws at the default density.
    The best individual always survives, so the elite score sequence is
    non-decreasing, and the search stops after ``cfg.stall_generations``
    generations without an elite improvement.
    """
    seed_graphs = [s.graph if isinstance(s, ScoredStructure) else s for s in seeds]
    if not seed_graphs:
        raise ValueError("need at least one seed structure")
    v = seed_graphs[0].v
    t = pair_count(v)
    if len(seed_graphs) > cfg.pop_size:
        raise ValueError("pop_size is smaller than the number of seeds")

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    ev = evaluator or StructureEvaluator(scatter, n, penalty, icf_cfg, threads)

    pop = np.zeros((cfg.pop_size, t), dtype=bool)
    for i, g in enumerate(seed_graphs):
        pop[i] = g.bits
    alpha = default_er_alpha(v) if v >= 2 else 0.0
    for i in range(len(seed_graphs), cfg.pop_size):
        pop[i] = random_er(v, alpha, rng).bits

    def eval_pop(p):
        return ev.evaluate_many([Graph(v, row) for row in p])

    scored = eval_pop(pop)
    elite = ev.best(scored)
    stall = 0
    for _ in range(cfg.max_generations):
        if stall >= cfg.stall_generations:
            break
        # weighted rank selection: rank r (1 = best) gets weight pop - r + 1
        order = sorted(range(cfg.pop_size),
                       key=lambda i: (-scored[i].score, scored[i].graph.key))
        weights = np.arange(cfg.pop_size, 0, -1, dtype=float)
        weights /= weights.sum()
        chosen = rng.choice(np.asarray(order), size=cfg.pop_size, p=weights)
        new_pop = pop[chosen].copy()
        # single-point crossover on consecutive pairs
        for i in range(0, cfg.pop_size - 1, 2):
            if t >= 2 and rng.random() < cfg.p_crossover:
                point = int(rng.integers(1, t))
                a = new_pop[i].copy()
                new_pop[i, point:] = new_pop[i + 1, point:]
                new_pop[i + 1, point:] = a[point:]
        # mutation: flip exactly one bit
        for i in range(cfg.pop_size):
            if t >= 1 and rng.random() < cfg.p_mutation:
                bit = int(rng.integers(t))
                new_pop[i, bit] = ~new_pop[i, bit]
        new_pop[0] = elite.graph.bits  # elitism
        pop = new_pop
        scored = eval_pop(pop)
        best = ev.best(scored)
        if _is_better(best.score, best.graph.key, elite.score, elite.graph.key):
            if best.score > elite.score:
                stall = 0
            else:
                stall += 1
            elite = best
        else:
            stall += 1
    return elite
