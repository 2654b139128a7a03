"""Graph-complexity penalties used to score candidate structures.

Four built-in families (natural logs throughout):

  bic   Q = (1/2) E log n
  ebic  Q = (1/2) E log n + 2 gamma E log V
  er    Q = -E log(alpha) - (T - E) log(1 - alpha)
  pl    Q = beta * sum_j log(d_j + 1)

plus ``none`` (Q = 0) and ``custom`` (user-supplied function of the graph).
Exp(-Q) is an unnormalized prior over graphs: ``er`` is the Erdos-Renyi
likelihood of the edge set, ``pl`` a node-degree power law that, at equal
edge count, favors hub-like structures over evenly spread ones.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .graphs import pair_count

PENALTY_KINDS = ("bic", "ebic", "er", "pl", "none", "custom")


def default_er_alpha(v):
    """Connection probability log(V)/T, giving ~log(V) expected edges."""
    if v < 2:
        raise ValueError("need at least two variables")
    return math.log(v) / pair_count(v)


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family plus its tuning parameters.

    ``n`` is the sample size entering bic/ebic and the default power-law
    weight beta = log(n * V). ``alpha`` defaults to log(V)/T at evaluation
    time; ``beta`` to log(n * V).
    """

    kind: str = "bic"
    n: Optional[float] = None
    gamma: float = 1.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    custom: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind in ("bic", "ebic") and (self.n is None or self.n < 2):
            raise ValueError(f"penalty {self.kind!r} needs a sample size n >= 2")
        if self.kind == "ebic" and not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.kind == "er" and self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.kind == "pl":
            if self.beta is not None and self.beta < 0:
                raise ValueError("beta must be nonnegative")
            if self.beta is None and (self.n is None or self.n < 1):
                raise ValueError("penalty 'pl' needs n to default beta = log(n V)")
        if self.kind == "custom" and self.custom is None:
            raise ValueError("penalty 'custom' needs a callable")


def penalty_value(spec, graph):
    """Evaluate Q(graph) for the given spec."""
    if spec.kind == "none":
        return 0.0
    if spec.kind == "custom":
        return float(spec.custom(graph))
    v = graph.v
    if v < 2:
        raise ValueError("penalties are defined for graphs on >= 2 variables")
    e = graph.edge_count()
    if spec.kind == "bic":
        return 0.5 * e * math.log(spec.n)
    if spec.kind == "ebic":
        return 0.5 * e * math.log(spec.n) + 2.0 * spec.gamma * e * math.log(v)
    if spec.kind == "er":
        alpha = spec.alpha if spec.alpha is not None else default_er_alpha(v)
        t = pair_count(v)
        return -e * math.log(alpha) - (t - e) * math.log1p(-alpha)
    # power law
    beta = spec.beta if spec.beta is not None else math.log(spec.n * v)
    deg = graph.degrees()
    return beta * float(sum(math.log(d + 1.0) for d in deg))
