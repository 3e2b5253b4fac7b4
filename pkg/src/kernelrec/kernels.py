"""Construction, normalization and validation of the user-similarity kernels.

Eight Gram matrices over the user index set:

========  ==========================================================
label     similarity captured
========  ==========================================================
ONES      constant 1 (lets degree-2 combinations keep linear terms)
ID        closeness of users' network-wide impact distributions,
          from random walks with restart
CT        topological closeness, from the Laplacian pseudo-inverse
COM       co-membership in detected communities
DEM       shared demographic attribute tokens
CLA       shared self-claimed interest tokens
ACT1      overlap of rated item sets
ACT2      closeness of users' mean rating levels (RBF)
========  ==========================================================

All constructors return symmetric PSD matrices; ``validate_psd`` is the
explicit guard used by the pipeline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .communities import CommunityAssignment, detect_communities
from .dataset import Dataset, RatingMatrix
from .graph import SocialGraph, laplacian, transition_matrix

KERNEL_ORDER = ("ONES", "ID", "CT", "COM", "DEM", "CLA", "ACT1", "ACT2")
SOCIAL_KERNELS = KERNEL_ORDER[1:]

ALPHA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
SIGMA_SCALE_GRID = (0.5, 1.0, 2.0)

_DIAG_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelConfig:
    """Kernel hyper-parameters.

    ``alpha`` is the restart damping of the random-walk kernel,
    ``sigma`` the RBF width of the rating-bias kernel (``None`` derives
    it from the data), and ``normalize`` applies cosine normalization
    to the two unbounded kernels (ID, CT).
    """

    alpha: float = 0.85
    sigma: float | None = None
    normalize: bool = True

    def validate(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class KernelMatrix:
    """Dense symmetric Gram matrix over a user index set."""

    values: np.ndarray
    label: str
    normalized: bool = False
    user_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("kernel matrix must be square")
        if v.size and np.abs(v - v.T).max() > 1e-10:
            raise ValueError(f"kernel {self.label} is not symmetric within 1e-10")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PsdReport:
    min_eig: float
    max_eig: float
    passed: bool


def validate_psd(kernel: KernelMatrix | np.ndarray, tol: float = 1e-8) -> PsdReport:
    """Eigenvalue-based positive-semidefiniteness check.

    Passes iff ``min_eig >= -tol * max(|max_eig|, 1)``.  Asymmetry
    beyond ``tol`` is a hard error that names the worst entry.
    """
    k = kernel.values if isinstance(kernel, KernelMatrix) else np.asarray(kernel, float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("matrix must be square")
    if k.size == 0:
        return PsdReport(0.0, 0.0, True)
    gap = np.abs(k - k.T)
    worst = np.unravel_index(np.argmax(gap), gap.shape)
    if gap[worst] > tol:
        raise ValueError(
            f"matrix is asymmetric: |K[{worst[0]},{worst[1]}] - K[{worst[1]},{worst[0]}]| "
            f"= {gap[worst]:.3e} exceeds {tol:.3e}")
    eigs = np.linalg.eigvalsh((k + k.T) / 2.0)
    min_eig, max_eig = float(eigs[0]), float(eigs[-1])
    passed = min_eig >= -tol * max(abs(max_eig), 1.0)
    return PsdReport(min_eig, max_eig, passed)


def cosine_normalize(kernel: KernelMatrix) -> KernelMatrix:
    """Rescale so that k'(i,j) = k(i,j) / sqrt(k(i,i) k(j,j)).

    Rows whose diagonal is not positive are zeroed with the diagonal
    patched to 1, which keeps the matrix PSD and every user usable.
    """
    k = kernel.values
    d = np.diag(k).copy()
    good = d > _DIAG_FLOOR
    inv = np.zeros_like(d)
    inv[good] = 1.0 / np.sqrt(d[good])
    out = k * np.outer(inv, inv)
    out[~good, :] = 0.0
    out[:, ~good] = 0.0
    np.fill_diagonal(out, 1.0)
    return KernelMatrix(out, kernel.label, normalized=True, user_ids=kernel.user_ids)


def all_ones_kernel(n: int) -> KernelMatrix:
    """Rank-one all-ones matrix; Hadamard identity for other kernels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return KernelMatrix(np.ones((n, n)), "ONES", normalized=True)


def impact_distribution_kernel(graph: SocialGraph, alpha: float,
                               strict: bool = False) -> KernelMatrix:
    """Similarity of users' stationary random-walk-with-restart profiles.

    A walk restarts at its origin with probability ``1 - alpha``; its
    stationary reach matrix is obtained by a dense linear solve of
    ``(I - alpha * P^T) X = (1 - alpha) I`` (never an explicit inverse),
    and the kernel is the Gram matrix of the reach columns.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    p = transition_matrix(graph, strict=strict)
    n = graph.n
    a = np.eye(n) - alpha * p.T
    try:
        reach = np.linalg.solve(a, (1.0 - alpha) * np.eye(n))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cannot occur for alpha<1
        raise RuntimeError(
            f"resolvent solve failed (condition estimate {np.linalg.cond(a):.3e})") from exc
    k = reach.T @ reach
    k = (k + k.T) / 2.0
    return KernelMatrix(k, "ID")


def commute_time_kernel(graph: SocialGraph) -> KernelMatrix:
    """Moore-Penrose pseudo-inverse of the graph Laplacian.

    Computed from a symmetric eigendecomposition, zeroing eigenvalues
    below 1e-10 times the largest one.
    """
    lap = laplacian(graph)
    if graph.n == 0:
        return KernelMatrix(lap, "CT")
    eigvals, eigvecs = np.linalg.eigh(lap)
    lam_max = float(eigvals[-1])
    keep = eigvals > 1e-10 * lam_max
    inv = np.zeros_like(eigvals)
    inv[keep] = 1.0 / eigvals[keep]
    k = (eigvecs * inv) @ eigvecs.T
    k = (k + k.T) / 2.0
    return KernelMatrix(k, "CT")


def community_kernel(assignment: CommunityAssignment | Mapping | Sequence[int],
                     n: int) -> KernelMatrix:
    """1 when two users share a community, else 0."""
    if isinstance(assignment, CommunityAssignment):
        labels = assignment.membership
        if len(labels) != n:
            raise KeyError("assignment does not cover all users")
    elif isinstance(assignment, Mapping):
        try:
            labels = [assignment[i] for i in range(n)]
        except KeyError as exc:
            raise KeyError(f"user {exc.args[0]} missing from community assignment") from None
    else:
        labels = list(assignment)
        if len(labels) != n:
            raise KeyError("assignment does not cover all users")
    arr = np.asarray(labels)
    k = (arr[:, None] == arr[None, :]).astype(np.float64)
    return KernelMatrix(k, "COM", normalized=True)


def _token_set_kernel(token_sets: Sequence[frozenset[str]] | Sequence[set[str]],
                      n: int, label: str) -> KernelMatrix:
    """Shared-token count normalized by the geometric mean of set sizes.

    Users with empty token sets get zero rows with the diagonal patched
    to 1 (adds a PSD rank-one term, keeps them predictable elsewhere).
    """
    if len(token_sets) != n:
        raise ValueError("token sets must align with the user index set")
    vocab: dict[str, int] = {}
    rows, cols = [], []
    for u, tokens in enumerate(token_sets):
        for tok in tokens:
            j = vocab.setdefault(tok, len(vocab))
            rows.append(u)
            cols.append(j)
    if vocab:
        b = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                          shape=(n, len(vocab)), dtype=np.float64)
        counts = np.asarray((b @ b.T).todense(), dtype=np.float64)
    else:
        counts = np.zeros((n, n))
    sizes = np.array([len(t) for t in token_sets], dtype=np.float64)
    good = sizes > 0
    inv = np.zeros(n)
    inv[good] = 1.0 / np.sqrt(sizes[good])
    k = counts * np.outer(inv, inv)
    k[~good, :] = 0.0
    k[:, ~good] = 0.0
    np.fill_diagonal(k, 1.0)
    k = (k + k.T) / 2.0
    return KernelMatrix(k, label, normalized=True)


def demographic_kernel(demographics: Sequence[frozenset[str]], n: int) -> KernelMatrix:
    """Shared ``attribute=value`` tokens, geometric-mean normalized."""
    return _token_set_kernel(demographics, n, "DEM")


def claim_kernel(claims: Sequence[frozenset[str]], n: int) -> KernelMatrix:
    """Shared claim tokens, geometric-mean normalized."""
    return _token_set_kernel(claims, n, "CLA")


def _masked_items(ratings: RatingMatrix, user: int,
                  mask: set[tuple[int, int]] | None) -> list[int]:
    items = ratings.items_of(user)
    if not mask:
        return list(items)
    return [i for i in items if (user, i) not in mask]


def action_overlap_kernel(ratings: RatingMatrix, n: int,
                          mask: set[tuple[int, int]] | None = None) -> KernelMatrix:
    """Overlap of rated item sets: |v_i & v_j| / sqrt(|v_i| |v_j|).

    ``mask`` removes (user, item) pairs from the rated sets before
    computing, for leakage-controlled evaluation.
    """
    if ratings.n_users != n:
        raise ValueError("rating matrix does not match the user index set")
    token_sets = [frozenset(str(i) for i in _masked_items(ratings, u, mask))
                  for u in range(n)]
    k = _token_set_kernel(token_sets, n, "ACT1")
    return k


def rating_bias_kernel(ratings: RatingMatrix, n: int, sigma: float,
                       mask: set[tuple[int, int]] | None = None) -> KernelMatrix:
    """RBF closeness of user mean ratings: exp(-(m_i - m_j)^2 / (2 sigma^2)).

    Users with no (unmasked) ratings take the global mean as their
    level, so the kernel stays defined for every user.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if ratings.n_users != n:
        raise ValueError("rating matrix does not match the user index set")
    means = np.empty(n)
    known: list[float] = []
    for u in range(n):
        vals = [ratings.get(u, i) for i in _masked_items(ratings, u, mask)]
        if vals:
            means[u] = sum(vals) / len(vals)
            known.append(means[u])
        else:
            means[u] = np.nan
    global_mean = float(np.mean(known)) if known else 5.5
    means = np.where(np.isnan(means), global_mean, means)
    diff = means[:, None] - means[None, :]
    k = np.exp(-(diff ** 2) / (2.0 * sigma * sigma))
    k = (k + k.T) / 2.0
    np.fill_diagonal(k, 1.0)
    return KernelMatrix(k, "ACT2", normalized=True)


def default_sigma(ratings: RatingMatrix,
                  mask: set[tuple[int, int]] | None = None) -> float:
    """Sample standard deviation of user mean ratings (fallback 1.0)."""
    means = []
    for u in range(ratings.n_users):
        vals = [ratings.get(u, i) for i in _masked_items(ratings, u, mask)]
        if vals:
            means.append(sum(vals) / len(vals))
    if len(means) < 2:
        return 1.0
    s = float(np.std(means, ddof=1))
    return s if s > 0 else 1.0


def build_kernel_bank(dataset: Dataset, config: KernelConfig | None = None,
                      *, assignment: CommunityAssignment | None = None,
                      mask: set[tuple[int, int]] | None = None,
                      seed: int = 0) -> dict[str, KernelMatrix]:
    """All eight kernels keyed by label, in ``KERNEL_ORDER``.

    Communities are detected here unless an assignment is supplied;
    the two unbounded kernels are cosine-normalized when
    ``config.normalize`` is set.  ``mask`` applies to the two
    action kernels only (the others do not read ratings).
    """
    config = config or KernelConfig()
    config.validate()
    n = dataset.n_users
    ids = dataset.users
    if assignment is None:
        assignment = detect_communities(dataset.graph, seed=seed)
    sigma = config.sigma if config.sigma is not None else default_sigma(dataset.ratings, mask)

    bank: dict[str, KernelMatrix] = {}
    bank["ONES"] = all_ones_kernel(n)
    k_id = impact_distribution_kernel(dataset.graph, config.alpha)
    k_ct = commute_time_kernel(dataset.graph)
    if config.normalize:
        k_id = cosine_normalize(k_id)
        k_ct = cosine_normalize(k_ct)
    bank["ID"] = k_id
    bank["CT"] = k_ct
    bank["COM"] = community_kernel(assignment, n)
    bank["DEM"] = demographic_kernel(dataset.demographics, n)
    bank["CLA"] = claim_kernel(dataset.claims, n)
    bank["ACT1"] = action_overlap_kernel(dataset.ratings, n, mask)
    bank["ACT2"] = rating_bias_kernel(dataset.ratings, n, sigma, mask)
    bank = {label: KernelMatrix(bank[label].values, label,
                                bank[label].normalized, tuple(ids))
            for label in KERNEL_ORDER}
    return bank


# ---------------------------------------------------------------------------
# binary container

_MAGIC = b"KRNM"


def save_kernel(kernel: KernelMatrix, path: str | Path) -> None:
    """Write magic, size, label and flag, then row-major float64 LE."""
    label_bytes = kernel.label.encode("ascii")
    if len(label_bytes) > 255:
        raise ValueError("label too long")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", kernel.n))
        fh.write(struct.pack("<B", len(label_bytes)))
        fh.write(label_bytes)
        fh.write(struct.pack("<B", 1 if kernel.normalized else 0))
        fh.write(np.ascontiguousarray(kernel.values, dtype="<f8").tobytes())


def load_kernel(path: str | Path) -> KernelMatrix:
    """Read a kernel written by :func:`save_kernel`; raises ValueError on corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10 or blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a kernel container")
    n = struct.unpack("<I", blob[4:8])[0]
    label_len = blob[8]
    off = 9 + label_len
    if len(blob) < off + 1:
        raise ValueError(f"{path}: truncated header")
    label = blob[9:off].decode("ascii")
    normalized = bool(blob[off])
    payload = blob[off + 1:]
    expected = n * n * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n).astype(np.float64)
    return KernelMatrix(values, label, normalized)
