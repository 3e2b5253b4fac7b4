"""Friendship-graph representation and the primitives built on it.

Nodes are integer indices ``0..n-1``; mapping between external user ids
and indices is owned by :mod:`kernelrec.dataset`.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

FRIEND_BIN_LABELS = ("1-5", "6-10", "11-20", "21-50", ">50")
ZERO_FRIEND_BIN = "0"

_BIN_EDGES = ((1, 5), (6, 10), (11, 20), (21, 50), (51, None))


class SocialGraph:
    """Undirected, unweighted graph over ``n`` users.

    The adjacency matrix is a 0/1 CSR matrix with zero diagonal;
    duplicate and reversed edge pairs collapse to a single edge.
    Instances are immutable after construction, so concurrent reads
    are safe.
    """

    def __init__(self, n: int, edges: Iterable[tuple[int, int]]):
        if n < 0:
            raise ValueError("node count must be >= 0")
        seen: set[tuple[int, int]] = set()
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a},{b}) references a node outside [0,{n})")
            if a == b:
                raise ValueError(f"self-loop on node {a} is not allowed")
            seen.add((min(a, b), max(a, b)))
        self.n = n
        self._edges = tuple(sorted(seen))
        if self._edges:
            rows = np.fromiter((a for a, _ in self._edges), dtype=np.int64)
            cols = np.fromiter((b for _, b in self._edges), dtype=np.int64)
            data = np.ones(len(self._edges), dtype=np.float64)
            upper = sp.coo_matrix((data, (rows, cols)), shape=(n, n))
            adj = (upper + upper.T).tocsr()
        else:
            adj = sp.csr_matrix((n, n), dtype=np.float64)
        self.adjacency = adj
        self.degrees = np.asarray(adj.sum(axis=1)).ravel().astype(np.int64)
        self.neighbors: tuple[np.ndarray, ...] = tuple(
            adj.indices[adj.indptr[i] : adj.indptr[i + 1]].copy() for i in range(n)
        )
        self.n_edges = len(self._edges)

    def edges(self) -> tuple[tuple[int, int], ...]:
        return self._edges

    def degree(self, node: int) -> int:
        self._check_node(node)
        return int(self.degrees[node])

    def _check_node(self, node: int) -> None:
        if not (0 <= node < self.n):
            raise KeyError(f"node {node} not in graph of size {self.n}")

    def __repr__(self) -> str:  # pragma: no cover
        return f"SocialGraph(n={self.n}, edges={self.n_edges})"


def transition_matrix(graph: SocialGraph, strict: bool = False) -> np.ndarray:
    """Row-stochastic single-step transition matrix.

    Entry ``(i, j)`` is ``a_ij / degree(i)``.  Degree-zero rows are an
    error in strict mode; otherwise they are replaced by the uniform
    distribution over all nodes so that every row still sums to one.
    """
    n = graph.n
    if n == 0:
        return np.zeros((0, 0))
    deg = graph.degrees
    zero = deg == 0
    if strict and zero.any():
        bad = np.nonzero(zero)[0]
        raise ValueError(f"graph has degree-0 nodes {bad.tolist()}; cannot normalize rows")
    safe = np.where(zero, 1, deg).astype(np.float64)
    p = graph.adjacency.toarray() / safe[:, None]
    if zero.any():
        p[zero, :] = 1.0 / n
    return p


def laplacian(graph: SocialGraph) -> np.ndarray:
    """Combinatorial Laplacian ``diag(degrees) - adjacency`` as a dense array."""
    lap = np.diag(graph.degrees.astype(np.float64)) - graph.adjacency.toarray()
    return lap


def bfs_levels(graph: SocialGraph, source: int, max_level: int) -> dict[int, set[int]]:
    """Nodes grouped by exact shortest-path distance from ``source``.

    Returns ``{1: {...}, 2: {...}, ...}`` up to ``max_level``; levels
    with no nodes are omitted, and unreachable nodes never appear.
    """
    graph._check_node(source)
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    dist = {source: 0}
    levels: dict[int, set[int]] = {}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        d = dist[u]
        if d >= max_level:
            continue
        for v in graph.neighbors[u]:
            v = int(v)
            if v not in dist:
                dist[v] = d + 1
                levels.setdefault(d + 1, set()).add(v)
                queue.append(v)
    return levels


def friend_count_bin(graph: SocialGraph, user: int) -> str:
    """Bin label for a user's friend count: 1-5, 6-10, 11-20, 21-50 or >50.

    Degree-zero users fall into a separate "0" bin that reporting
    excludes from the five regular bins.
    """
    return degree_bin(graph.degree(user))


def degree_bin(degree: int) -> str:
    if degree == 0:
        return ZERO_FRIEND_BIN
    for label, (lo, hi) in zip(FRIEND_BIN_LABELS, _BIN_EDGES):
        if degree >= lo and (hi is None or degree <= hi):
            return label
    raise AssertionError("unreachable")
