"""Neighbor-influence and collaborative-filtering comparison predictors.

All predictors are pure reads over immutable structures.  Each returns
``None`` instead of a number only when the configured fallback is
``"none"`` and no prediction is possible; callers that need coverage
accounting use that signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Collection, Mapping

import numpy as np

from .dataset import RatingMatrix
from .graph import SocialGraph, bfs_levels
from .kernels import KernelMatrix

DAMPING_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

FALLBACKS = ("global_mean", "item_mean", "user_mean", "none")

Similarity = "KernelMatrix | np.ndarray | Callable[[int, int], float]"


@dataclass(frozen=True)
class BaselineConfig:
    """Damping and level cap for multi-level influence, plus fallback policy."""

    damping: float = 0.5
    max_level: int = 6
    normalize: bool = False
    fallback: str = "global_mean"

    def validate(self) -> None:
        if not (0.0 < self.damping < 1.0):
            raise ValueError("damping must lie in (0, 1)")
        if self.max_level < 1:
            raise ValueError("max_level must be >= 1")
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")


DEFAULT_CONFIG = BaselineConfig()


def _allowed_raters(ratings: RatingMatrix, item: int,
                    allowed: Collection[int] | None) -> dict[int, float]:
    raters = ratings.raters_of(item)
    if allowed is None:
        return raters
    return {u: r for u, r in raters.items() if u in allowed}


def resolve_fallback(config: BaselineConfig, ratings: RatingMatrix,
                     user: int, item: int,
                     allowed: Collection[int] | None = None,
                     global_mean: float | None = None) -> float | None:
    """Fallback value per policy; ``None`` for the "none" policy."""
    if config.fallback == "none":
        return None
    if config.fallback == "user_mean":
        m = ratings.user_mean(user)
        if m is not None:
            return m
    if config.fallback == "item_mean":
        raters = _allowed_raters(ratings, item, allowed)
        if raters:
            return sum(raters.values()) / len(raters)
    if global_mean is not None:
        return global_mean
    return ratings.global_mean


def predict_ni(graph: SocialGraph, ratings: RatingMatrix, v: int, w: int,
               config: BaselineConfig = DEFAULT_CONFIG, *,
               allowed: Collection[int] | None = None,
               global_mean: float | None = None) -> float | None:
    """Mean rating of the user's direct friends on the item."""
    graph._check_node(v)
    raters = _allowed_raters(ratings, w, allowed)
    votes = [raters[u] for u in graph.neighbors[v] if int(u) in raters]
    if votes:
        return sum(votes) / len(votes)
    return resolve_fallback(config, ratings, v, w, allowed, global_mean)


def multi_level_averages(graph: SocialGraph, ratings: RatingMatrix, v: int, w: int,
                         max_level: int, *,
                         allowed: Collection[int] | None = None,
                         levels: Mapping[int, Collection[int]] | None = None,
                         ) -> dict[int, float]:
    """Average rating of the item per shortest-path level from the user.

    Levels with no raters are absent.  ``levels`` accepts a
    precomputed BFS result so batch callers can reuse it.
    """
    if levels is None:
        levels = bfs_levels(graph, v, max_level)
    raters = _allowed_raters(ratings, w, allowed)
    out: dict[int, float] = {}
    for level, members in levels.items():
        if level > max_level:
            continue
        votes = [raters[u] for u in members if u in raters]
        if votes:
            out[level] = sum(votes) / len(votes)
    return out


def combine_level_averages(level_avgs: Mapping[int, float], damping: float,
                           normalize: bool) -> float | None:
    """Damped sum over levels: sum_i damping^i * avg_i.

    The literal form does not renormalize the weights; with
    ``normalize`` the sum is divided by the total weight of the levels
    that actually contributed.
    """
    if not level_avgs:
        return None
    num = sum((damping ** i) * avg for i, avg in level_avgs.items())
    if not normalize:
        return num
    den = sum(damping ** i for i in level_avgs)
    return num / den


def predict_mni(graph: SocialGraph, ratings: RatingMatrix, v: int, w: int,
                config: BaselineConfig = DEFAULT_CONFIG, *,
                allowed: Collection[int] | None = None,
                levels: Mapping[int, Collection[int]] | None = None,
                global_mean: float | None = None) -> float | None:
    """Damped multi-level neighbor influence prediction."""
    config.validate()
    graph._check_node(v)
    avgs = multi_level_averages(graph, ratings, v, w, config.max_level,
                                allowed=allowed, levels=levels)
    value = combine_level_averages(avgs, config.damping, config.normalize)
    if value is not None:
        return value
    return resolve_fallback(config, ratings, v, w, allowed, global_mean)


def _similarity_fn(similarity) -> Callable[[int, int], float]:
    if isinstance(similarity, KernelMatrix):
        values = similarity.values
        return lambda a, b: float(values[a, b])
    if isinstance(similarity, np.ndarray):
        return lambda a, b: float(similarity[a, b])
    if callable(similarity):
        return similarity
    raise TypeError("similarity must be a KernelMatrix, ndarray or callable")


def predict_cf(similarity, ratings: RatingMatrix, v: int, w: int,
               config: BaselineConfig = DEFAULT_CONFIG, *,
               allowed: Collection[int] | None = None,
               global_mean: float | None = None) -> float | None:
    """Similarity-weighted average of other users' ratings on the item.

    Numerator is signed, denominator sums absolute similarities; a
    zero denominator triggers the fallback.
    """
    sim = _similarity_fn(similarity)
    raters = _allowed_raters(ratings, w, allowed)
    num = 0.0
    den = 0.0
    for u, r in raters.items():
        if u == v:
            continue
        s = sim(v, u)
        num += s * r
        den += abs(s)
    if den > 1e-12:
        return num / den
    return resolve_fallback(config, ratings, v, w, allowed, global_mean)


def pearson_similarity(ratings: RatingMatrix, u: int, v: int) -> float:
    """Pearson correlation over co-rated items; 0 when undefined.

    Undefined means fewer than two co-rated items or zero variance on
    either side.
    """
    row_u = ratings.items_of(u)
    row_v = ratings.items_of(v)
    shared = sorted(set(row_u) & set(row_v))
    if len(shared) < 2:
        return 0.0
    xs = np.array([row_u[i] for i in shared])
    ys = np.array([row_v[i] for i in shared])
    xs = xs - xs.mean()
    ys = ys - ys.mean()
    sx = float(xs @ xs)
    sy = float(ys @ ys)
    if sx <= 0 or sy <= 0:
        return 0.0
    return float((xs @ ys) / math.sqrt(sx * sy))


def predict_ucf_bias(similarity, ratings: RatingMatrix, v: int, w: int,
                     config: BaselineConfig = DEFAULT_CONFIG, *,
                     allowed: Collection[int] | None = None,
                     global_mean: float | None = None,
                     exclude_target: bool = True) -> float | None:
    """Mean-offset collaborative filtering with a user bias term.

    Predicts m_v + sum sim(v,u) (R_uw - m_u) / sum |sim(v,u)| over the
    raters of the item.  The target user's own mean excludes the item
    being predicted; if the user has no other ratings the fallback
    policy applies, and a zero similarity mass degenerates to m_v.
    """
    sim = _similarity_fn(similarity)
    own = ratings.items_of(v)
    own_vals = [r for i, r in own.items() if not (exclude_target and i == w)]
    if not own_vals:
        return resolve_fallback(config, ratings, v, w, allowed, global_mean)
    m_v = sum(own_vals) / len(own_vals)
    raters = _allowed_raters(ratings, w, allowed)
    num = 0.0
    den = 0.0
    for u, r in raters.items():
        if u == v:
            continue
        m_u = ratings.user_mean(u)
        if m_u is None:
            continue
        s = sim(v, u)
        num += s * (r - m_u)
        den += abs(s)
    if den > 1e-12:
        return m_v + num / den
    return m_v


def tune_mni_damping(graph: SocialGraph, ratings: RatingMatrix,
                     tuning_pairs: list[tuple[int, int, float]],
                     sources: Collection[int], config: BaselineConfig,
                     grid=DAMPING_GRID) -> float:
    """Pick the damping with the lowest squared error on held-out pairs.

    Level averages are computed once per pair and reused across the
    whole grid.  Falls back to the configured damping when no pair can
    be predicted.  Ties resolve to the smaller damping.
    """
    errors = {d: [] for d in grid}
    level_cache: dict[int, Mapping[int, Collection[int]]] = {}
    for v, w, actual in tuning_pairs:
        if v not in level_cache:
            level_cache[v] = bfs_levels(graph, v, config.max_level)
        avgs = multi_level_averages(graph, ratings, v, w, config.max_level,
                                    allowed=sources, levels=level_cache[v])
        if not avgs:
            continue
        for d in grid:
            pred = combine_level_averages(avgs, d, config.normalize)
            errors[d].append((pred - actual) ** 2)
    best = config.damping
    best_mse = math.inf
    for d in grid:
        if errors[d]:
            mse = sum(errors[d]) / len(errors[d])
            if mse < best_mse - 1e-15:
                best, best_mse = d, mse
    return best
