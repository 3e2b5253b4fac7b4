import math

import numpy as np
import pytest

from kernelrec.communities import (CommunityAssignment, detect_communities,
                                   modularity, write_communities_csv)
from kernelrec.graph import SocialGraph

from conftest import make_graph
from oracles import best_partition_exhaustive, modularity_direct


class TestModularity:
    def test_single_community_is_zero(self, small_graph_corpus):
        for name, g in small_graph_corpus.items():
            if g.n_edges == 0:
                continue
            assert modularity(g, [0] * g.n) == pytest.approx(0.0, abs=1e-12), name

    def test_two_triangles_partition(self, two_triangles_bridge):
        q = modularity(two_triangles_bridge, [0, 0, 0, 1, 1, 1])
        assert q == pytest.approx(2 * (3 / 7 - (7 / 14) ** 2), abs=1e-12)
        assert q == pytest.approx(5 / 14, abs=1e-12)

    def test_singletons_on_single_edge(self, two_node_edge):
        assert modularity(two_node_edge, [0, 1]) == pytest.approx(-0.5, abs=1e-12)

    def test_matches_direct_formula(self, small_graph_corpus):
        rng = np.random.default_rng(3)
        for name, g in small_graph_corpus.items():
            if g.n_edges == 0:
                continue
            a = g.adjacency.toarray()
            for _ in range(5):
                labels = rng.integers(0, 3, size=g.n)
                assert modularity(g, labels) == pytest.approx(
                    modularity_direct(a, labels), abs=1e-12), name

    def test_edgeless_graph_rejected(self):
        with pytest.raises(ValueError, match="no edges"):
            modularity(make_graph(3, []), [0, 1, 2])

    def test_incomplete_assignment_rejected(self, triangle):
        with pytest.raises((KeyError, ValueError)):
            modularity(triangle, {0: 0, 1: 0})

    def test_bounded(self, small_graph_corpus):
        rng = np.random.default_rng(5)
        for g in small_graph_corpus.values():
            if g.n_edges == 0:
                continue
            for _ in range(5):
                labels = rng.integers(0, g.n, size=g.n)
                assert -1.0 <= modularity(g, labels) <= 1.0


class TestDetectCommunities:
    def test_two_cliques_exact_recovery(self, two_cliques_bridge):
        result = detect_communities(two_cliques_bridge, seed=0)
        assert result.n_communities == 2
        first = {result.membership[i] for i in range(5)}
        second = {result.membership[i] for i in range(5, 10)}
        assert len(first) == 1 and len(second) == 1 and first != second

    def test_complete_graph_single_community(self):
        k4 = make_graph(4, [(a, b) for a in range(4) for b in range(a + 1, 4)])
        result = detect_communities(k4, seed=1)
        assert result.n_communities == 1
        assert result.modularity == pytest.approx(0.0, abs=1e-12)

    def test_disconnected_triangles(self):
        g = make_graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        result = detect_communities(g, seed=2)
        assert result.n_communities == 2
        assert result.membership[0] == result.membership[1] == result.membership[2]
        assert result.membership[3] == result.membership[4] == result.membership[5]

    def test_reported_q_matches_recomputation(self, small_graph_corpus):
        for name, g in small_graph_corpus.items():
            if g.n_edges == 0:
                continue
            result = detect_communities(g, seed=7)
            assert result.modularity == pytest.approx(
                modularity(g, result.membership), abs=1e-12), name

    def test_q_trace_monotone(self, small_graph_corpus):
        for name, g in small_graph_corpus.items():
            result = detect_communities(g, seed=4)
            trace = result.q_trace
            for earlier, later in zip(trace, trace[1:]):
                assert later >= earlier - 1e-12, name

    def test_near_optimal_on_small_graphs(self):
        graphs = {
            "two_triangles": make_graph(6, [(0, 1), (1, 2), (0, 2), (3, 4),
                                            (4, 5), (3, 5), (2, 3)]),
            "path5": make_graph(5, [(i, i + 1) for i in range(4)]),
            "cycle8": make_graph(8, [(i, (i + 1) % 8) for i in range(8)]),
            "star6": make_graph(6, [(0, i) for i in range(1, 6)]),
            "barbell": make_graph(8, [(0, 1), (1, 2), (0, 2), (5, 6), (6, 7),
                                      (5, 7), (2, 3), (3, 4), (4, 5)]),
        }
        rng = np.random.default_rng(17)
        for i in range(3):
            n = 7
            edges = [(a, b) for a in range(n) for b in range(a + 1, n)
                     if rng.random() < 0.4]
            if edges:
                graphs[f"random{i}"] = make_graph(n, edges)
        for name, g in graphs.items():
            optimal_q, _ = best_partition_exhaustive(g.adjacency.toarray())
            detected = detect_communities(g, seed=0)
            if optimal_q > 0:
                assert detected.modularity >= 0.95 * optimal_q, (
                    name, detected.modularity, optimal_q)

    def test_deterministic_given_seed(self, two_cliques_bridge):
        a = detect_communities(two_cliques_bridge, seed=5)
        b = detect_communities(two_cliques_bridge, seed=5)
        assert a.membership == b.membership
        assert a.q_trace == b.q_trace

    def test_edgeless_graph_flagged(self):
        result = detect_communities(make_graph(4, []), seed=0)
        assert result.membership == (0, 1, 2, 3)
        assert math.isnan(result.modularity)
        assert not result.q_defined

    def test_labels_dense_from_zero(self, small_graph_corpus):
        for g in small_graph_corpus.values():
            result = detect_communities(g, seed=3)
            labels = set(result.membership)
            assert labels == set(range(len(labels)))


class TestExport:
    def test_csv_layout(self, tmp_path, two_node_edge):
        result = detect_communities(two_node_edge, seed=0)
        path = tmp_path / "communities.csv"
        write_communities_csv(result, ["alice", "bob"], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "user_id,community_id"
        assert len(lines) == 3

    def test_misaligned_users_rejected(self, two_node_edge, tmp_path):
        result = detect_communities(two_node_edge, seed=0)
        with pytest.raises(ValueError):
            write_communities_csv(result, ["only-one"], tmp_path / "x.csv")
