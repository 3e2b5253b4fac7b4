import numpy as np
import pytest

from kernelrec.graph import (SocialGraph, bfs_levels, degree_bin,
                             friend_count_bin, laplacian, transition_matrix)

from conftest import make_graph
from oracles import floyd_warshall


class TestSocialGraph:
    def test_dedupes_reversed_edges(self):
        g = SocialGraph(3, [(0, 1), (1, 0), (0, 1)])
        assert g.n_edges == 1
        assert g.degrees.tolist() == [1, 1, 0]

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            SocialGraph(2, [(0, 0)])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SocialGraph(2, [(0, 2)])

    def test_adjacency_symmetric_zero_diagonal(self, two_triangles_bridge):
        a = two_triangles_bridge.adjacency.toarray()
        assert np.array_equal(a, a.T)
        assert np.all(np.diag(a) == 0)
        assert set(np.unique(a)) <= {0.0, 1.0}

    def test_degrees_are_row_sums(self, two_triangles_bridge):
        a = two_triangles_bridge.adjacency.toarray()
        assert np.array_equal(two_triangles_bridge.degrees, a.sum(axis=1))


class TestTransitionMatrix:
    def test_two_node_edge(self, two_node_edge):
        p = transition_matrix(two_node_edge)
        np.testing.assert_allclose(p, [[0, 1], [1, 0]])

    def test_triangle_all_half(self, triangle):
        p = transition_matrix(triangle)
        expected = (np.ones((3, 3)) - np.eye(3)) / 2
        np.testing.assert_allclose(p, expected)

    def test_star(self):
        g = make_graph(4, [(0, 1), (0, 2), (0, 3)])
        p = transition_matrix(g)
        np.testing.assert_allclose(p[0], [0, 1 / 3, 1 / 3, 1 / 3])
        for leaf in (1, 2, 3):
            row = np.zeros(4)
            row[0] = 1.0
            np.testing.assert_allclose(p[leaf], row)

    def test_rows_sum_to_one(self, small_graph_corpus):
        for name, g in small_graph_corpus.items():
            p = transition_matrix(g)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12, err_msg=name)

    def test_degree_zero_strict_raises(self):
        g = make_graph(3, [(0, 1)])
        with pytest.raises(ValueError, match="degree-0"):
            transition_matrix(g, strict=True)

    def test_degree_zero_permissive_teleports(self):
        g = make_graph(3, [(0, 1)])
        p = transition_matrix(g)
        np.testing.assert_allclose(p[2], [1 / 3, 1 / 3, 1 / 3])
        np.testing.assert_allclose(p.sum(axis=1), 1.0)


class TestLaplacian:
    def test_two_node_edge(self, two_node_edge):
        np.testing.assert_array_equal(laplacian(two_node_edge), [[1, -1], [-1, 1]])

    def test_empty_graph(self):
        g = make_graph(3, [])
        np.testing.assert_array_equal(laplacian(g), np.zeros((3, 3)))

    def test_triangle(self, triangle):
        expected = 2 * np.eye(3) - (np.ones((3, 3)) - np.eye(3))
        np.testing.assert_array_equal(laplacian(triangle), expected)

    def test_rows_sum_to_zero_and_psd(self, small_graph_corpus):
        for name, g in small_graph_corpus.items():
            lap = laplacian(g)
            np.testing.assert_allclose(lap @ np.ones(g.n), 0.0, atol=1e-12, err_msg=name)
            eigs = np.linalg.eigvalsh(lap)
            assert eigs[0] > -1e-10, name


class TestBfsLevels:
    def test_path(self):
        g = make_graph(3, [(0, 1), (1, 2)])
        levels = bfs_levels(g, 0, 5)
        assert levels == {1: {1}, 2: {2}}

    def test_singleton_component(self):
        g = make_graph(3, [(0, 1)])
        assert bfs_levels(g, 2, 4) == {}

    def test_matches_apsp_oracle(self, small_graph_corpus):
        for name, g in small_graph_corpus.items():
            dist = floyd_warshall(g.adjacency.toarray())
            for src in range(g.n):
                levels = bfs_levels(g, src, g.n)
                for lvl in range(1, g.n + 1):
                    expected = {v for v in range(g.n) if dist[src, v] == lvl}
                    assert levels.get(lvl, set()) == expected, (name, src, lvl)

    def test_unknown_source(self, triangle):
        with pytest.raises(KeyError):
            bfs_levels(triangle, 9, 2)

    def test_max_level_validation(self, triangle):
        with pytest.raises(ValueError):
            bfs_levels(triangle, 0, 0)


class TestFriendBins:
    @pytest.mark.parametrize("degree,label", [
        (1, "1-5"), (5, "1-5"), (6, "6-10"), (10, "6-10"), (11, "11-20"),
        (20, "11-20"), (21, "21-50"), (50, "21-50"), (51, ">50"), (81, ">50"),
        (0, "0"),
    ])
    def test_bin_edges(self, degree, label):
        assert degree_bin(degree) == label

    def test_friend_count_bin_uses_degree(self):
        g = make_graph(7, [(0, i) for i in range(1, 6)])
        assert friend_count_bin(g, 0) == "1-5"
        assert friend_count_bin(g, 1) == "1-5"
        assert friend_count_bin(g, 6) == "0"

    def test_unknown_user(self, triangle):
        with pytest.raises(KeyError):
            friend_count_bin(triangle, 99)
