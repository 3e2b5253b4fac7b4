"""Data model, CSV ingestion, fold assignment and the synthetic generator.

The CSV layouts:

* ``ratings.csv``       header ``user_id,item_id,rating``
* ``friendships.csv``   header ``user_id_a,user_id_b`` (undirected)
* ``demographics.csv``  header ``user_id,attribute,value`` (one token per row)
* ``claims.csv``        header ``user_id,claim``
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import SocialGraph, transition_matrix

logger = logging.getLogger(__name__)

RATING_MIN = 1.0
RATING_MAX = 10.0


class ParseError(ValueError):
    """A data file row that cannot be ingested; the message names the line."""


class UnknownUserError(LookupError):
    """A row references a user that strict-mode ingestion does not know."""


class RatingMatrix:
    """Sparse user x item rating store with per-user derived views.

    Ratings live on the closed interval [1, 10] and are kept as floats.
    The derived views are the item set each user rated and each user's
    mean rating; the mean is defined only for users with at least one
    rating.
    """

    def __init__(self, n_users: int, n_items: int,
                 entries: Iterable[tuple[int, int, float]]):
        self.n_users = n_users
        self.n_items = n_items
        by_user: list[dict[int, float]] = [dict() for _ in range(n_users)]
        by_item: list[dict[int, float]] = [dict() for _ in range(n_items)]
        total = 0.0
        count = 0
        for u, i, r in entries:
            if not (0 <= u < n_users and 0 <= i < n_items):
                raise ValueError(f"rating entry ({u},{i}) outside index range")
            r = float(r)
            if not (RATING_MIN <= r <= RATING_MAX):
                raise ValueError(f"rating {r} for ({u},{i}) outside [{RATING_MIN},{RATING_MAX}]")
            if i in by_user[u]:
                raise ValueError(f"duplicate rating for user {u}, item {i}")
            by_user[u][i] = r
            by_item[i][u] = r
            total += r
            count += 1
        self._by_user = tuple(by_user)
        self._by_item = tuple(by_item)
        self.n_ratings = count
        self.global_mean = total / count if count else None

    def items_of(self, user: int) -> dict[int, float]:
        """Item -> rating mapping for one user (do not mutate)."""
        return self._by_user[user]

    def raters_of(self, item: int) -> dict[int, float]:
        """User -> rating mapping for one item (do not mutate)."""
        return self._by_item[item]

    def get(self, user: int, item: int) -> float | None:
        return self._by_user[user].get(item)

    def user_mean(self, user: int) -> float | None:
        """Mean rating of ``user``; ``None`` when the user has no ratings."""
        row = self._by_user[user]
        if not row:
            return None
        return sum(row.values()) / len(row)

    def entries(self) -> Iterable[tuple[int, int, float]]:
        for u, row in enumerate(self._by_user):
            for i in sorted(row):
                yield u, i, row[i]

    def __eq__(self, other) -> bool:
        return (isinstance(other, RatingMatrix)
                and self.n_users == other.n_users
                and self.n_items == other.n_items
                and self._by_user == other._by_user)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RatingMatrix({self.n_users}x{self.n_items}, {self.n_ratings} ratings)"


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of users into ``k`` folds whose sizes differ by at most 1."""

    assignment: tuple[int, ...]
    k: int
    seed: int

    def fold_of(self, user: int) -> int:
        return self.assignment[user]

    def members(self, fold: int) -> np.ndarray:
        arr = np.asarray(self.assignment)
        return np.nonzero(arr == fold)[0]

    def sizes(self) -> list[int]:
        arr = np.asarray(self.assignment)
        return [int((arr == f).sum()) for f in range(self.k)]


class Dataset:
    """Users, items, ratings, friendship graph and per-user token sets.

    Immutable after construction; all invariants are checked here so
    downstream code can rely on index validity.
    """

    def __init__(self, users: Sequence[str], items: Sequence[str],
                 ratings: RatingMatrix, graph: SocialGraph,
                 demographics: Sequence[frozenset[str]] | None = None,
                 claims: Sequence[frozenset[str]] | None = None):
        self.users = tuple(users)
        self.items = tuple(items)
        if ratings.n_users != len(self.users) or ratings.n_items != len(self.items):
            raise ValueError("rating matrix shape does not match user/item index sets")
        if graph.n != len(self.users):
            raise ValueError("graph size does not match user index set")
        self.ratings = ratings
        self.graph = graph
        empty = frozenset()
        self.demographics = tuple(demographics) if demographics is not None \
            else tuple(empty for _ in self.users)
        self.claims = tuple(claims) if claims is not None \
            else tuple(empty for _ in self.users)
        if len(self.demographics) != len(self.users) or len(self.claims) != len(self.users):
            raise ValueError("token sets must align with the user index set")
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.item_index = {m: j for j, m in enumerate(self.items)}

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Dataset)
                and self.users == other.users
                and self.items == other.items
                and self.ratings == other.ratings
                and self.graph.edges() == other.graph.edges()
                and self.demographics == other.demographics
                and self.claims == other.claims)

    def __repr__(self) -> str:  # pragma: no cover
        return (f"Dataset({self.n_users} users, {self.n_items} items, "
                f"{self.ratings.n_ratings} ratings, {self.graph.n_edges} edges)")


@dataclass
class SyntheticParams:
    """Knobs for the seeded synthetic corpus generator.

    ``community_strength`` drives both graph assortativity and the size
    of the shared per-community item effects; ``influence_strength``
    controls how much of a user's latent preference is the average of
    their friends' preferences.
    """

    n_users: int = 500
    n_items: int = 50
    mean_degree: float = 14.16
    n_communities: int = 5
    influence_strength: float = 0.5
    community_strength: float = 1.0
    noise_std: float = 0.5
    ratings_per_user_mean: float = 5.59
    seed: int = 0

    def validate(self) -> None:
        if self.n_users < 1 or self.n_items < 1 or self.n_communities < 1:
            raise ValueError("counts must be >= 1")
        if self.mean_degree >= self.n_users:
            raise ValueError("mean_degree must be smaller than n_users")
        if self.mean_degree <= 0:
            raise ValueError("mean_degree must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.influence_strength < 0 or self.community_strength < 0:
            raise ValueError("strengths must be >= 0")
        if self.ratings_per_user_mean <= 0:
            raise ValueError("ratings_per_user_mean must be positive")

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticParams":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_mapping(doc)

    @classmethod
    def from_mapping(cls, doc: Mapping) -> "SyntheticParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown synthetic parameter(s): {sorted(unknown)}")
        return cls(**doc)


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path: str | Path, expected_header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise ParseError(f"{path}: line 1: expected header {','.join(expected_header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(expected_header):
                raise ParseError(f"{path}: line {lineno}: expected {len(expected_header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def load_dataset(ratings_path: str | Path, friendships_path: str | Path,
                 demographics_path: str | Path | None = None,
                 claims_path: str | Path | None = None,
                 strict: bool = False) -> Dataset:
    """Build a Dataset from the CSV files.

    Duplicate friendship rows (in either direction) collapse to one
    edge and self-loops are rejected.  In strict mode, friendship rows
    naming users absent from the ratings file raise
    :class:`UnknownUserError` and users left with zero friends are
    dropped, mirroring a corpus restricted to connected reviewers.
    In permissive mode every user mentioned anywhere is kept.
    """
    raw_ratings: list[tuple[str, str, float]] = []
    rated_users: set[str] = set()
    items: set[str] = set()
    for lineno, (u, m, r) in _read_rows(ratings_path, ["user_id", "item_id", "rating"]):
        try:
            value = float(r)
        except ValueError:
            raise ParseError(f"{ratings_path}: line {lineno}: rating {r!r} is not a number") from None
        if not (RATING_MIN <= value <= RATING_MAX):
            raise ParseError(f"{ratings_path}: line {lineno}: rating {value} outside [1,10]")
        if not u or not m:
            raise ParseError(f"{ratings_path}: line {lineno}: empty user or item id")
        raw_ratings.append((u, m, value))
        rated_users.add(u)
        items.add(m)

    raw_edges: list[tuple[str, str]] = []
    friend_users: set[str] = set()
    for lineno, (a, b) in _read_rows(friendships_path, ["user_id_a", "user_id_b"]):
        if not a or not b:
            raise ParseError(f"{friendships_path}: line {lineno}: empty user id")
        if a == b:
            raise ParseError(f"{friendships_path}: line {lineno}: self-loop on {a!r}")
        if strict and (a not in rated_users or b not in rated_users):
            missing = a if a not in rated_users else b
            raise UnknownUserError(
                f"{friendships_path}: line {lineno}: user {missing!r} has no ratings")
        raw_edges.append((a, b))
        friend_users.update((a, b))

    demo_tokens: dict[str, set[str]] = {}
    if demographics_path is not None:
        for lineno, (u, attr, val) in _read_rows(
                demographics_path, ["user_id", "attribute", "value"]):
            if not u or not attr:
                raise ParseError(f"{demographics_path}: line {lineno}: empty field")
            demo_tokens.setdefault(u, set()).add(f"{attr}={val}")

    claim_tokens: dict[str, set[str]] = {}
    if claims_path is not None:
        for lineno, (u, claim) in _read_rows(claims_path, ["user_id", "claim"]):
            if not u or not claim:
                raise ParseError(f"{claims_path}: line {lineno}: empty field")
            claim_tokens.setdefault(u, set()).add(claim)

    universe = set(rated_users) | friend_users | set(demo_tokens) | set(claim_tokens)
    if strict:
        # keep only users that end up with at least one friend
        connected = friend_users
        dropped = sorted(universe - connected)
        if dropped:
            logger.info("strict mode: dropping %d friendless user(s)", len(dropped))
        universe = connected

    users = sorted(universe)
    user_index = {u: i for i, u in enumerate(users)}
    item_ids = sorted(items)
    item_index = {m: j for j, m in enumerate(item_ids)}

    entries = [(user_index[u], item_index[m], r)
               for u, m, r in raw_ratings if u in user_index]
    try:
        ratings = RatingMatrix(len(users), len(item_ids), entries)
    except ValueError as exc:
        raise ParseError(f"{ratings_path}: {exc}") from None
    edges = [(user_index[a], user_index[b]) for a, b in raw_edges
             if a in user_index and b in user_index]
    graph = SocialGraph(len(users), edges)
    demographics = tuple(frozenset(demo_tokens.get(u, ())) for u in users)
    claims = tuple(frozenset(claim_tokens.get(u, ())) for u in users)
    return Dataset(users, item_ids, ratings, graph, demographics, claims)


def write_dataset_csvs(dataset: Dataset, out_dir: str | Path) -> dict[str, Path]:
    """Write the four CSV files for ``dataset``; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    def _write(name: str, header: list[str], rows: Iterable[Sequence]) -> None:
        path = out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        paths[name] = path

    _write("ratings.csv", ["user_id", "item_id", "rating"],
           ((dataset.users[u], dataset.items[i], repr(r))
            for u, i, r in dataset.ratings.entries()))
    _write("friendships.csv", ["user_id_a", "user_id_b"],
           ((dataset.users[a], dataset.users[b]) for a, b in dataset.graph.edges()))
    _write("demographics.csv", ["user_id", "attribute", "value"],
           ((dataset.users[u], *token.split("=", 1))
            for u in range(dataset.n_users)
            for token in sorted(dataset.demographics[u])))
    _write("claims.csv", ["user_id", "claim"],
           ((dataset.users[u], token)
            for u in range(dataset.n_users)
            for token in sorted(dataset.claims[u])))
    return paths


# ---------------------------------------------------------------------------
# folds


def split_folds(dataset: Dataset | int, k: int, seed: int) -> FoldAssignment:
    """Uniform random partition of users into ``k`` folds.

    Accepts a Dataset or a bare user count.  Deterministic for a given
    seed; fold sizes differ by at most one.
    """
    n = dataset if isinstance(dataset, int) else dataset.n_users
    if k < 2 or k > n:
        raise ValueError(f"fold count {k} must be in [2, {n}]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % k
    return FoldAssignment(tuple(int(f) for f in assignment), k, seed)


# ---------------------------------------------------------------------------
# synthetic corpus

_POWER_LAW_EXPONENT = 2.5
_RATING_CENTER = 5.5
_USER_BIAS_STD = 0.5
_N_GENRES = 8
_N_CITIES = 12


def _power_law_degrees(rng: np.random.Generator, n: int, mean_degree: float) -> np.ndarray:
    """Heavy-tailed degree sequence with the requested mean.

    Draws from a discrete power law with exponent 2.5 truncated to
    [1, n/10], then rescales the sample toward ``mean_degree`` and
    clips back into range; the rescaling preserves the qualitative
    shape while honouring the mean target.
    """
    d_max = max(1, n // 10)
    support = np.arange(1, d_max + 1, dtype=np.float64)
    pmf = support ** (-_POWER_LAW_EXPONENT)
    pmf /= pmf.sum()
    draws = rng.choice(support, size=n, p=pmf)
    scale = mean_degree / draws.mean()
    degrees = np.clip(np.rint(draws * scale), 1, d_max).astype(np.int64)
    return degrees


def _paired_edges(rng: np.random.Generator, degrees: np.ndarray,
                  communities: np.ndarray, intra_prob: float) -> list[tuple[int, int]]:
    """Configuration-model pairing with a same-community preference.

    Stubs are matched one by one; with probability ``intra_prob`` the
    partner is drawn from the same community's remaining stubs, else
    from the whole network.  Self-loops and duplicate edges are
    rejected with a bounded number of retries, so realized degrees can
    fall slightly short of the drawn sequence.
    """
    n = len(degrees)
    stub_node = np.repeat(np.arange(n), degrees)
    n_stubs = len(stub_node)
    alive = np.ones(n_stubs, dtype=bool)
    global_pool = list(range(n_stubs))
    comm_pool: dict[int, list[int]] = {}
    for s in range(n_stubs):
        comm_pool.setdefault(int(communities[stub_node[s]]), []).append(s)

    def pop_alive(lst: list[int]) -> int | None:
        # stale ids (stubs consumed via the other pool) are dropped lazily
        while lst:
            idx = int(rng.integers(len(lst)))
            lst[idx], lst[-1] = lst[-1], lst[idx]
            s = lst.pop()
            if alive[s]:
                return s
        return None

    edges: set[tuple[int, int]] = set()
    while True:
        sa = pop_alive(global_pool)
        if sa is None:
            break
        a = int(stub_node[sa])
        alive[sa] = False
        own_pool = comm_pool.get(int(communities[a]), [])
        for _ in range(20):
            use_intra = rng.random() < intra_prob
            src = own_pool if use_intra else global_pool
            sb = pop_alive(src)
            if sb is None:
                if use_intra:
                    continue
                break
            b = int(stub_node[sb])
            key = (min(a, b), max(a, b))
            if b != a and key not in edges:
                edges.add(key)
                alive[sb] = False
                break
            src.append(sb)  # rejected partner stays available
    return sorted(edges)


def generate_synthetic(params: SyntheticParams) -> Dataset:
    """Seeded synthetic dataset with planted structure.

    The friendship graph has heavy-tailed degrees and community-biased
    wiring.  Each user's latent preference per item is a shared
    community effect plus a personal bias, smoothed toward the average
    of their friends' latents by ``influence_strength``; observed
    ratings add Gaussian noise and clamp to [1, 10].
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    n, n_items = params.n_users, params.n_items
    communities = np.arange(n) % params.n_communities

    degrees = _power_law_degrees(rng, n, params.mean_degree)
    intra_prob = params.community_strength / (1.0 + params.community_strength)
    edges = _paired_edges(rng, degrees, communities, intra_prob)
    graph = SocialGraph(n, edges)

    # latent preferences
    community_effect = rng.normal(0.0, 1.0, size=(params.n_communities, n_items))
    community_effect *= params.community_strength
    user_bias = rng.normal(0.0, _USER_BIAS_STD, size=n)
    base = community_effect[communities, :] + user_bias[:, None]

    mix = params.influence_strength / (1.0 + params.influence_strength)
    if mix > 0 and graph.n_edges > 0:
        p = transition_matrix(graph, strict=False)
        latent = base.copy()
        for _ in range(30):
            latent = (1.0 - mix) * base + mix * (p @ latent)
    else:
        latent = base

    # observed ratings
    entries: list[tuple[int, int, float]] = []
    for u in range(n):
        count = min(n_items, max(1, int(rng.poisson(params.ratings_per_user_mean))))
        chosen = rng.choice(n_items, size=count, replace=False)
        noise = rng.normal(0.0, params.noise_std, size=count)
        for j, eps in zip(chosen, noise):
            value = _RATING_CENTER + latent[u, int(j)] + eps
            entries.append((u, int(j), float(np.clip(value, RATING_MIN, RATING_MAX))))

    users = [f"u{idx:05d}" for idx in range(n)]
    items = [f"m{idx:04d}" for idx in range(n_items)]
    ratings = RatingMatrix(n, n_items, entries)

    cities = [f"city{c:02d}" for c in range(_N_CITIES)]
    demographics = []
    claims = []
    for u in range(n):
        tokens = {f"gender={'F' if rng.random() < 0.5 else 'M'}"}
        if rng.random() < 0.8:
            city = cities[communities[u] % _N_CITIES]
        else:
            city = cities[int(rng.integers(_N_CITIES))]
        tokens.add(f"city={city}")
        tokens.add(f"age_band=band{int(rng.integers(5))}")
        demographics.append(frozenset(tokens))

        liked = {f"genre{communities[u] % _N_GENRES}"} if rng.random() < 0.7 else set()
        extra = rng.integers(0, 3)
        for _ in range(int(extra)):
            liked.add(f"genre{int(rng.integers(_N_GENRES))}")
        claims.append(frozenset(liked))

    return Dataset(users, items, ratings, graph, demographics, claims)
