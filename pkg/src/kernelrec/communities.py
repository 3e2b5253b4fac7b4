"""Modularity scoring and two-phase local-moving community detection.

The detector repeats a local-moving sweep (each node greedily joins the
neighboring community with the best modularity gain) and an aggregation
step that collapses communities into weighted super-nodes, until no
single-node move improves modularity.  Node visit order is shuffled per
sweep from a seeded generator, which makes runs reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .graph import SocialGraph

_TIE_EPS = 1e-12


@dataclass(frozen=True)
class CommunityAssignment:
    """Node -> community labels (dense ids from 0) with the achieved Q.

    ``modularity`` is NaN for edgeless graphs, where Q is undefined;
    ``q_trace`` holds Q after each local-moving pass, starting from the
    all-singletons partition.
    """

    membership: tuple[int, ...]
    modularity: float
    q_trace: tuple[float, ...]
    seed: int

    @property
    def n_communities(self) -> int:
        return len(set(self.membership)) if self.membership else 0

    @property
    def q_defined(self) -> bool:
        return not math.isnan(self.modularity)

    def community_of(self, node: int) -> int:
        return self.membership[node]


def _membership_array(graph: SocialGraph, assignment) -> np.ndarray:
    if isinstance(assignment, CommunityAssignment):
        labels = assignment.membership
    elif isinstance(assignment, Mapping):
        try:
            labels = [assignment[i] for i in range(graph.n)]
        except KeyError as exc:
            raise KeyError(f"node {exc.args[0]} missing from community assignment") from None
    else:
        labels = list(assignment)
    if len(labels) != graph.n:
        raise ValueError("assignment must cover every node exactly once")
    return np.asarray(labels, dtype=np.int64)


def modularity(graph: SocialGraph, assignment) -> float:
    """Newman modularity of a partition of ``graph``.

    Q = (1/2m) sum_ij [a_ij - d_i d_j / 2m] delta(c_i, c_j), which
    reduces to sum over communities of (intra-edge fraction) minus
    (degree fraction squared).  Undefined on edgeless graphs.
    """
    if graph.n_edges == 0:
        raise ValueError("modularity is undefined for a graph with no edges")
    labels = _membership_array(graph, assignment)
    m = graph.n_edges
    q = 0.0
    intra = {}
    for a, b in graph.edges():
        if labels[a] == labels[b]:
            intra[labels[a]] = intra.get(labels[a], 0) + 1
    deg_sum: dict[int, float] = {}
    for node, d in enumerate(graph.degrees):
        c = labels[node]
        deg_sum[c] = deg_sum.get(c, 0.0) + float(d)
    for c, dsum in deg_sum.items():
        q += intra.get(c, 0) / m - (dsum / (2.0 * m)) ** 2
    return q


class _WorkingGraph:
    """Weighted graph used internally across aggregation passes.

    ``self_weight[i]`` stores twice the edge mass internal to the
    original-node group that super-node ``i`` represents.
    """

    def __init__(self, links: list[dict[int, float]], self_weight: list[float]):
        self.links = links
        self.self_weight = self_weight
        self.strength = [self_weight[i] + sum(links[i].values())
                         for i in range(len(links))]
        self.total_weight = sum(self.strength)  # equals 2m

    @classmethod
    def from_graph(cls, graph: SocialGraph) -> "_WorkingGraph":
        links = [{int(j): 1.0 for j in graph.neighbors[i]} for i in range(graph.n)]
        return cls(links, [0.0] * graph.n)

    @property
    def n(self) -> int:
        return len(self.links)

    def partition_q(self, comm: Sequence[int]) -> float:
        two_m = self.total_weight
        inw: dict[int, float] = {}
        tot: dict[int, float] = {}
        for i in range(self.n):
            c = comm[i]
            tot[c] = tot.get(c, 0.0) + self.strength[i]
            inw[c] = inw.get(c, 0.0) + self.self_weight[i]
            for j, w in self.links[i].items():
                if comm[j] == c:
                    inw[c] = inw.get(c, 0.0) + w
        return sum(inw.get(c, 0.0) / two_m - (t / two_m) ** 2 for c, t in tot.items())


def _local_move(work: _WorkingGraph, rng: np.random.Generator) -> tuple[list[int], bool]:
    """One local-moving phase; returns (community labels, moved anything)."""
    n = work.n
    comm = list(range(n))
    tot = list(work.strength)
    two_m = work.total_weight
    improved = False
    while True:
        order = rng.permutation(n)
        moves = 0
        for v in order:
            v = int(v)
            cv = comm[v]
            link_w: dict[int, float] = {}
            for u, w in work.links[v].items():
                cu = comm[u]
                link_w[cu] = link_w.get(cu, 0.0) + w
            tot[cv] -= work.strength[v]
            # score is the modularity gain up to a positive constant factor
            best_c = cv
            best_score = link_w.get(cv, 0.0) - tot[cv] * work.strength[v] / two_m
            for c in sorted(link_w):
                if c == cv:
                    continue
                score = link_w[c] - tot[c] * work.strength[v] / two_m
                if score > best_score + _TIE_EPS or (
                        abs(score - best_score) <= _TIE_EPS and c < best_c):
                    best_c, best_score = c, score
            tot[best_c] += work.strength[v]
            if best_c != cv:
                comm[v] = best_c
                moves += 1
        if moves == 0:
            break
        improved = True
    return comm, improved


def _aggregate(work: _WorkingGraph, comm: Sequence[int]) -> tuple[_WorkingGraph, list[int]]:
    """Collapse communities into super-nodes; returns (graph, old->new map)."""
    ids = sorted(set(comm))
    remap = {c: i for i, c in enumerate(ids)}
    new_n = len(ids)
    links: list[dict[int, float]] = [dict() for _ in range(new_n)]
    self_weight = [0.0] * new_n
    for i in range(work.n):
        ci = remap[comm[i]]
        self_weight[ci] += work.self_weight[i]
        for j, w in work.links[i].items():
            cj = remap[comm[j]]
            if ci == cj:
                self_weight[ci] += w  # ordered pairs, so intra mass lands twice
            else:
                links[ci][cj] = links[ci].get(cj, 0.0) + w
    return _WorkingGraph(links, self_weight), [remap[c] for c in comm]


def detect_communities(graph: SocialGraph, seed: int = 0) -> CommunityAssignment:
    """Greedy modularity maximization over ``graph``.

    Repeats local moving plus aggregation until no single-node move
    improves Q.  On edgeless graphs every node gets its own community
    and Q is flagged NaN.
    """
    n = graph.n
    if graph.n_edges == 0:
        return CommunityAssignment(tuple(range(n)), float("nan"), (), seed)
    rng = np.random.default_rng(seed)
    work = _WorkingGraph.from_graph(graph)
    node_comm = list(range(n))  # original node -> current working community
    q_trace = [work.partition_q(list(range(work.n)))]
    while True:
        comm, improved = _local_move(work, rng)
        q_trace.append(work.partition_q(comm))
        if not improved:
            break
        work, old_to_new = _aggregate(work, comm)
        node_comm = [old_to_new[node_comm[v]] for v in range(n)]
    # densify labels in first-appearance order for stable output
    relabel: dict[int, int] = {}
    final = []
    for v in range(n):
        c = node_comm[v]
        if c not in relabel:
            relabel[c] = len(relabel)
        final.append(relabel[c])
    q = modularity(graph, final)
    return CommunityAssignment(tuple(final), q, tuple(q_trace), seed)


def write_communities_csv(assignment: CommunityAssignment, users: Sequence[str],
                          path: str | Path) -> None:
    """Export ``user_id,community_id`` rows."""
    if len(users) != len(assignment.membership):
        raise ValueError("user id list must align with the assignment")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "community_id"])
        for uid, c in zip(users, assignment.membership):
            writer.writerow([uid, c])
