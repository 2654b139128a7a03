"""Bi-directed covariance graphs stored as upper-triangle bit vectors.

A graph over ``v`` variables is encoded by the ``T = v(v-1)/2`` bits of its
adjacency matrix read in row-major upper-triangle order: pairs
(1,2), (1,3), ..., (1,V), (2,3), ..., (V-1,V). Every module that serializes
or compares structures relies on this single canonical order.
"""

import numpy as np


def pair_count(v):
    """Number of variable pairs, T = v(v-1)/2."""
    return v * (v - 1) // 2


def num_vertices(t):
    """Invert T = v(v-1)/2; raises if t is not a triangular number."""
    v = int(round((1.0 + np.sqrt(1.0 + 8.0 * t)) / 2.0))
    if pair_count(v) != t:
        raise ValueError(f"{t} is not a valid pair count v*(v-1)/2")
    return v


def pair_index(v, j, h):
    """Position of the unordered pair (j, h), 0-indexed, in the bit vector."""
    if j == h:
        raise ValueError("diagonal pairs have no index")
    if j > h:
        j, h = h, j
    if j < 0 or h >= v:
        raise IndexError(f"pair ({j}, {h}) out of range for v={v}")
    return j * v - (j * (j + 1)) // 2 + (h - j - 1)


def iter_pairs(v):
    """Yield (j, h), j < h, in canonical bit order."""
    for j in range(v):
        for h in range(j + 1, v):
            yield j, h


class Graph:
    """Immutable symmetric graph with a zero diagonal.

    Instances are hashable and totally ordered through ``key``, the packed
    big-endian byte form of the bit vector, whose lexicographic order equals
    the bitstring's. Ties in structure scores are broken on ``key``.
    """

    __slots__ = ("v", "bits", "key", "_adj")

    def __init__(self, v, bits):
        bits = np.ascontiguousarray(bits, dtype=bool)
        if v < 1:
            raise ValueError("need at least one variable")
        if bits.shape != (pair_count(v),):
            raise ValueError(
                f"expected {pair_count(v)} bits for v={v}, got {bits.shape}"
            )
        bits.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "key", np.packbits(bits).tobytes())
        adj = np.zeros((v, v), dtype=np.uint8)
        if v > 1:
            ju, hu = np.triu_indices(v, k=1)
            adj[ju[bits], hu[bits]] = 1
            adj[hu[bits], ju[bits]] = 1
        adj.setflags(write=False)
        object.__setattr__(self, "_adj", adj)

    def __setattr__(self, name, value):
        raise AttributeError("Graph is immutable")

    # -- constructors ------------------------------------------------------

    @classmethod
    def empty(cls, v):
        return cls(v, np.zeros(pair_count(v), dtype=bool))

    @classmethod
    def complete(cls, v):
        return cls(v, np.ones(pair_count(v), dtype=bool))

    @classmethod
    def from_bitstring(cls, s):
        if set(s) - {"0", "1"}:
            raise ValueError("bitstring must contain only 0 and 1")
        bits = np.frombuffer(s.encode(), dtype=np.uint8) == ord("1")
        return cls(num_vertices(len(s)), bits)

    @classmethod
    def from_edges(cls, v, edges):
        bits = np.zeros(pair_count(v), dtype=bool)
        for j, h in edges:
            bits[pair_index(v, j, h)] = True
        return cls(v, bits)

    @classmethod
    def from_adjacency(cls, adj):
        adj = np.asarray(adj)
        v = adj.shape[0]
        if adj.shape != (v, v):
            raise ValueError("adjacency matrix must be square")
        if np.any(adj != adj.T):
            raise ValueError("adjacency matrix must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency diagonal must be zero")
        ju, hu = np.triu_indices(v, k=1)
        return cls(v, adj[ju, hu] != 0)

    # -- queries -----------------------------------------------------------

    def to_bitstring(self):
        return "".join("1" if b else "0" for b in self.bits)

    def adjacency(self):
        """Dense 0/1 adjacency matrix (read-only view)."""
        return self._adj

    def has_edge(self, j, h):
        return bool(self._adj[j, h])

    def neighbors(self, j):
        """Sorted array of variables adjacent to j (0-indexed)."""
        if j < 0 or j >= self.v:
            raise IndexError(f"variable {j} out of range for v={self.v}")
        return np.flatnonzero(self._adj[j])

    def edge_count(self):
        return int(self.bits.sum())

    def degrees(self):
        return self._adj.sum(axis=1).astype(np.int64)

    def edges(self):
        """Edge list [(j, h), ...], j < h, in canonical order."""
        ju, hu = np.triu_indices(self.v, k=1)
        sel = self.bits
        return list(zip(ju[sel].tolist(), hu[sel].tolist()))

    # -- derived graphs ----------------------------------------------------

    def flip(self, idx):
        """New graph with bit ``idx`` inverted."""
        bits = self.bits.copy()
        bits[idx] = ~bits[idx]
        return Graph(self.v, bits)

    def with_edge(self, j, h, present=True):
        bits = self.bits.copy()
        bits[pair_index(self.v, j, h)] = present
        return Graph(self.v, bits)

    # -- dunder ------------------------------------------------------------

    def __eq__(self, other):
        return (
            isinstance(other, Graph) and self.v == other.v and self.key == other.key
        )

    def __hash__(self):
        return hash((self.v, self.key))

    def __lt__(self, other):
        if self.v != other.v:
            raise ValueError("cannot order graphs of different sizes")
        return self.key < other.key

    def __repr__(self):
        return f"Graph(v={self.v}, bits={self.to_bitstring()!r})"


def structure_stats(g):
    """(edge count, degree sequence) of a graph."""
    return g.edge_count(), g.degrees()


def random_er(v, p, rng):
    """Erdos-Renyi draw: each pair is an edge independently with prob p."""
    return Graph(v, rng.random(pair_count(v)) < p)
