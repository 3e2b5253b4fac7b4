"""Independent reference implementations used to freeze expected values.

Everything here is deliberately brute force and shares no code with the
package internals it checks: truncated power series instead of linear
solves, exhaustive enumeration instead of heuristics, projected
gradient instead of pairwise coordinate ascent.
"""

from __future__ import annotations

import itertools

import numpy as np


def neumann_rwr_kernel(adjacency: np.ndarray, alpha: float, terms: int = 200) -> np.ndarray:
    """Random-walk-with-restart Gram matrix via a truncated power series."""
    a = np.asarray(adjacency, dtype=np.float64)
    deg = a.sum(axis=1)
    deg_safe = np.where(deg == 0, 1.0, deg)
    p = a / deg_safe[:, None]
    p[deg == 0, :] = 1.0 / len(a)
    pt = p.T
    term = np.eye(len(a))
    total = np.eye(len(a))
    for _ in range(terms):
        term = alpha * (pt @ term)
        total += term
    reach = (1.0 - alpha) * total
    return reach.T @ reach


def laplacian_pinv_eig(adjacency: np.ndarray) -> np.ndarray:
    """Laplacian pseudo-inverse straight from numpy's pinv."""
    a = np.asarray(adjacency, dtype=np.float64)
    lap = np.diag(a.sum(axis=1)) - a
    return np.linalg.pinv(lap, hermitian=True)


def floyd_warshall(adjacency: np.ndarray) -> np.ndarray:
    """All-pairs shortest paths on an unweighted graph."""
    n = len(adjacency)
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    dist[np.asarray(adjacency) > 0] = 1.0
    for k in range(n):
        dist = np.minimum(dist, dist[:, k][:, None] + dist[k, :][None, :])
    return dist


def modularity_direct(adjacency: np.ndarray, labels) -> float:
    """Raw double-sum modularity formula."""
    a = np.asarray(adjacency, dtype=np.float64)
    labels = np.asarray(labels)
    deg = a.sum(axis=1)
    two_m = deg.sum()
    same = labels[:, None] == labels[None, :]
    return float(((a - np.outer(deg, deg) / two_m) * same).sum() / two_m)


def set_partitions(items: list):
    """Every partition of ``items`` exactly once (restricted growth)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        for i in range(len(partition)):
            yield partition[:i] + [partition[i] + [first]] + partition[i + 1:]
        yield partition + [[first]]


def best_partition_exhaustive(adjacency: np.ndarray) -> tuple[float, list[list[int]]]:
    """Globally optimal modularity over all partitions (small n only)."""
    n = len(adjacency)
    best_q, best_p = -np.inf, None
    for partition in set_partitions(list(range(n))):
        labels = np.empty(n, dtype=np.int64)
        for c, block in enumerate(partition):
            labels[block] = c
        q = modularity_direct(adjacency, labels)
        if q > best_q:
            best_q, best_p = q, partition
    return best_q, best_p


def project_box_equality(z: np.ndarray, c: float, signs: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x in [0, C]^m : signs . x = 0} by bisection."""
    lo, hi = -(c + np.abs(z).max() + 1.0), (c + np.abs(z).max() + 1.0)

    def point(lam):
        return np.clip(z - lam * signs, 0.0, c)

    for _ in range(200):
        mid = (lo + hi) / 2.0
        if signs @ point(mid) > 0:
            lo = mid
        else:
            hi = mid
    return point((lo + hi) / 2.0)


def svr_dual_reference(k: np.ndarray, y: np.ndarray, c: float, epsilon: float,
                       iters: int = 200_000, tol: float = 1e-12):
    """Projected-gradient solve of the epsilon-SVR dual.

    Returns (alpha_plus, alpha_minus, objective) where the objective is
    the maximization form of the dual.
    """
    k = np.asarray(k, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    signs = np.concatenate([np.ones(n), -np.ones(n)])
    x = np.zeros(2 * n)
    eigs = np.linalg.eigvalsh((k + k.T) / 2.0)
    step = 1.0 / (2.0 * max(float(eigs[-1]), 1e-6))
    prev = np.inf
    for it in range(iters):
        ap, am = x[:n], x[n:]
        beta = ap - am
        kb = k @ beta
        grad = np.concatenate([kb - y + epsilon, -kb + y + epsilon])
        x_new = project_box_equality(x - step * grad, c, signs)
        delta = np.abs(x_new - x).max()
        x = x_new
        if delta < tol and it > 100:
            break
    ap, am = x[:n], x[n:]
    beta = ap - am
    objective = float(beta @ y - epsilon * (ap.sum() + am.sum()) - 0.5 * beta @ (k @ beta))
    return ap, am, objective


def random_feasible_duals(rng: np.random.Generator, n: int, c: float):
    """A random point in the SVR dual feasible set."""
    z = rng.uniform(0.0, c, size=2 * n)
    signs = np.concatenate([np.ones(n), -np.ones(n)])
    x = project_box_equality(z, c, signs)
    return x[:n], x[n:]


def combine_double_sum(kernels: list[np.ndarray], eta: np.ndarray) -> np.ndarray:
    """Degree-2 combination as the explicit double loop over kernel pairs."""
    n = kernels[0].shape[0]
    out = np.zeros((n, n))
    for m, km in enumerate(kernels):
        for h, kh in enumerate(kernels):
            out += eta[m] * eta[h] * (km * kh)
    return out


def grid_project_2d(point: np.ndarray, center: np.ndarray, radius: float,
                    resolution: int = 801) -> np.ndarray:
    """Dense grid argmin of distance over {v >= 0, ||v - center|| <= radius}."""
    span = radius + float(np.abs(center).max()) + 1.0
    axis = np.linspace(0.0, span, resolution)
    best, best_d = None, np.inf
    for vx in axis:
        for vy in axis:
            v = np.array([vx, vy])
            if np.linalg.norm(v - center) > radius:
                continue
            d = np.linalg.norm(v - point)
            if d < best_d:
                best, best_d = v, d
    return best
