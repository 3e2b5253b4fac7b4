import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kernelrec.dataset import Dataset, RatingMatrix, SyntheticParams, generate_synthetic
from kernelrec.graph import SocialGraph


def make_graph(n, edges):
    return SocialGraph(n, edges)


@pytest.fixture
def two_node_edge():
    return make_graph(2, [(0, 1)])


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def two_triangles_bridge():
    # nodes 0-2 and 3-5 are triangles, bridged by (2, 3)
    return make_graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])


@pytest.fixture
def two_cliques_bridge():
    edges = []
    for block in (range(0, 5), range(5, 10)):
        edges.extend((a, b) for a in block for b in block if a < b)
    edges.append((4, 5))
    return make_graph(10, edges)


def random_connected_graph(rng, n, p=0.45):
    """Erdos-Renyi sample conditioned on connectivity (resampled)."""
    for _ in range(200):
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < p]
        g = SocialGraph(n, edges)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in g.neighbors[u]:
                if int(v) not in seen:
                    seen.add(int(v))
                    stack.append(int(v))
        if len(seen) == n:
            return g
    raise AssertionError("failed to sample a connected graph")


@pytest.fixture
def small_graph_corpus():
    """Graphs with <= 10 nodes used by the kernel and community oracles."""
    rng = np.random.default_rng(1234)
    graphs = {
        "edge": make_graph(2, [(0, 1)]),
        "path3": make_graph(3, [(0, 1), (1, 2)]),
        "triangle": make_graph(3, [(0, 1), (1, 2), (0, 2)]),
        "star": make_graph(4, [(0, 1), (0, 2), (0, 3)]),
        "two_triangles": make_graph(6, [(0, 1), (1, 2), (0, 2),
                                        (3, 4), (4, 5), (3, 5), (2, 3)]),
        "cycle6": make_graph(6, [(i, (i + 1) % 6) for i in range(6)]),
    }
    for i, n in enumerate((6, 8, 10)):
        graphs[f"random{n}"] = random_connected_graph(rng, n)
    return graphs


@pytest.fixture(scope="session")
def small_synthetic():
    params = SyntheticParams(n_users=60, n_items=12, mean_degree=6.0,
                             n_communities=3, influence_strength=0.6,
                             community_strength=1.5, noise_std=0.4,
                             ratings_per_user_mean=5.0, seed=11)
    return generate_synthetic(params)


def tiny_ratings(entries, n_users, n_items):
    return RatingMatrix(n_users, n_items, entries)
