"""Epsilon-insensitive support vector regression on precomputed Gram matrices.

The dual problem solved here is

    max  (a+ - a-)' y - eps * sum(a+ + a-) - 1/2 (a+ - a-)' K (a+ - a-)
    s.t. sum(a+ - a-) = 0,   0 <= a+, a- <= C

via pairwise coordinate ascent: each step picks the maximal-violating
pair among the 2N box variables and solves the one-dimensional
subproblem in closed form.  Cost per step is O(N); step counts grow
roughly quadratically with N for the instances this package targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_CURVATURE_FLOOR = 1e-12
_STALL_PASSES = 5


class TrainingError(RuntimeError):
    """Training could not proceed (bad Gram matrix or degenerate input)."""


@dataclass(frozen=True)
class SvrConfig:
    """Box bound C, insensitive margin, KKT tolerance and pass budget."""

    C: float = 1.0
    epsilon: float = 0.5
    tol: float = 1e-6
    max_passes: int = 200
    check_psd: bool = False

    def validate(self) -> None:
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.tol <= 0 or self.max_passes < 1:
            raise ValueError("tol must be positive and max_passes >= 1")


@dataclass
class SvrModel:
    """Dual solution for one item's training set."""

    beta: np.ndarray              # a+ - a-
    bias: float
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    support: np.ndarray           # indices with beta != 0
    converged: bool
    iterations: int
    kkt_violation: float
    config: SvrConfig
    train_user_ids: tuple | None = None

    @property
    def n_train(self) -> int:
        return len(self.beta)


def _select_pair(ap, am, gp, gm, c):
    """Maximal-violating pair over the 2N virtual variables.

    Returns (violation, up_side, up_idx, low_side, low_idx) where side
    is +1 for an a+ variable and -1 for an a- variable.
    """
    neg_inf = -np.inf
    up_scores = np.where(ap < c, -gp, neg_inf)
    up_scores_m = np.where(am > 0, gm, neg_inf)
    low_scores = np.where(ap > 0, -gp, np.inf)
    low_scores_m = np.where(am < c, gm, np.inf)

    i_p = int(np.argmax(up_scores))
    i_m = int(np.argmax(up_scores_m))
    if up_scores[i_p] >= up_scores_m[i_m]:
        up = (1, i_p, up_scores[i_p])
    else:
        up = (-1, i_m, up_scores_m[i_m])

    j_p = int(np.argmin(low_scores))
    j_m = int(np.argmin(low_scores_m))
    if low_scores[j_p] <= low_scores_m[j_m]:
        low = (1, j_p, low_scores[j_p])
    else:
        low = (-1, j_m, low_scores_m[j_m])

    violation = up[2] - low[2]
    return violation, up[0], up[1], low[0], low[1]


def train_svr(k_train: np.ndarray, y: Sequence[float], config: SvrConfig | None = None,
              *, warm_start: tuple[np.ndarray, np.ndarray] | None = None,
              train_user_ids: tuple | None = None) -> SvrModel:
    """Solve the dual on a Gram submatrix.

    ``warm_start`` takes (a+, a-) from a previous solve on a related
    kernel; values are clipped back into the box.  If the KKT violation
    stalls for several passes the best iterate is returned with
    ``converged=False`` rather than raising.
    """
    config = config or SvrConfig()
    config.validate()
    k = np.asarray(k_train, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n == 0:
        raise ValueError("cannot train on zero points")
    if k.shape != (n, n):
        raise ValueError(f"Gram matrix shape {k.shape} does not match {n} targets")
    if not (np.isfinite(k).all() and np.isfinite(y).all()):
        raise TrainingError("non-finite values in kernel or targets")
    if np.diag(k).min() < -1e-10:
        raise TrainingError("negative kernel diagonal; input is not PSD")
    if config.check_psd:
        eigs = np.linalg.eigvalsh((k + k.T) / 2.0)
        if eigs[0] < -1e-8 * max(abs(eigs[-1]), 1.0):
            raise TrainingError(f"kernel failed PSD validation (min eig {eigs[0]:.3e})")

    c = config.C
    eps = config.epsilon
    if warm_start is not None:
        ap = np.clip(np.asarray(warm_start[0], dtype=np.float64).copy(), 0.0, c)
        am = np.clip(np.asarray(warm_start[1], dtype=np.float64).copy(), 0.0, c)
        # restore the equality constraint after clipping
        drift = ap.sum() - am.sum()
        if abs(drift) > 1e-12:
            ap, am = _rebalance(ap, am, drift, c)
        beta = ap - am
        val = k @ beta
    else:
        ap = np.zeros(n)
        am = np.zeros(n)
        beta = np.zeros(n)
        val = np.zeros(n)

    pass_len = max(n, 1)
    max_iter = config.max_passes * pass_len
    best = None
    best_viol = np.inf
    stall = 0
    prev_best = np.inf
    it = 0
    converged = False
    final_viol = np.inf

    while it < max_iter:
        gp = val + eps - y
        gm = -val + eps + y
        viol, su, iu, sl, jl = _select_pair(ap, am, gp, gm, c)
        final_viol = viol
        if viol < best_viol:
            best_viol = viol
            best = (ap.copy(), am.copy(), val.copy(), viol)
        if viol <= config.tol:
            converged = True
            break

        curv = k[iu, iu] + k[jl, jl] - 2.0 * k[iu, jl]
        if curv < _CURVATURE_FLOOR:
            curv = _CURVATURE_FLOOR
        t = viol / curv
        t = min(t, (c - ap[iu]) if su > 0 else am[iu])
        t = min(t, ap[jl] if sl > 0 else (c - am[jl]))
        if t <= 0:
            break  # numerically stuck; best iterate is returned

        if su > 0:
            ap[iu] += t
        else:
            am[iu] -= t
        if sl > 0:
            ap[jl] -= t
        else:
            am[jl] += t
        beta[iu] += t
        beta[jl] -= t
        val += t * (k[:, iu] - k[:, jl])
        it += 1

        if it % pass_len == 0:
            if best_viol >= prev_best - 1e-12:
                stall += 1
                if stall >= _STALL_PASSES:
                    break
            else:
                stall = 0
            prev_best = best_viol

    if not converged and best is not None and best_viol < final_viol:
        ap, am, val, final_viol = best[0], best[1], best[2], best[3]
        beta = ap - am

    # canonical complementarity: shrink the overlap of a+ and a-
    overlap = np.minimum(ap, am)
    if overlap.max() > 0:
        ap = ap - overlap
        am = am - overlap

    gp = val + eps - y
    gm = -val + eps + y
    free_vals = np.concatenate([(-gp)[(ap > 0) & (ap < c)], gm[(am > 0) & (am < c)]])
    if free_vals.size:
        bias = float(free_vals.mean())
    else:
        viol, su, iu, sl, jl = _select_pair(ap, am, gp, gm, c)
        up_val = -gp[iu] if su > 0 else gm[iu]
        low_val = -gp[jl] if sl > 0 else gm[jl]
        bias = float((up_val + low_val) / 2.0)

    beta = ap - am
    return SvrModel(
        beta=beta,
        bias=bias,
        alpha_plus=ap,
        alpha_minus=am,
        support=np.nonzero(beta)[0],
        converged=converged,
        iterations=it,
        kkt_violation=float(final_viol),
        config=config,
        train_user_ids=train_user_ids,
    )


def _rebalance(ap, am, drift, c):
    """Restore sum(a+) == sum(a-) after warm-start clipping.

    Shrinks whichever side is too large; keeps everything in the box.
    """
    if drift > 0:
        total = ap.sum()
        if total > 0:
            ap = ap * ((total - drift) / total)
    else:
        total = am.sum()
        if total > 0:
            am = am * ((total + drift) / total)
    return ap, am


def predict_svr(model: SvrModel, k_row: np.ndarray,
                clamp: tuple[float, float] | None = None) -> float:
    """Kernel expansion sum(beta_n * k(u, u_n)) + bias, optionally clamped."""
    k_row = np.asarray(k_row, dtype=np.float64)
    if k_row.shape != (model.n_train,):
        raise ValueError(f"k_row has shape {k_row.shape}, expected ({model.n_train},)")
    value = float(model.beta @ k_row + model.bias)
    if clamp is not None:
        value = min(max(value, clamp[0]), clamp[1])
    return value


def dual_objective(model: SvrModel, k: np.ndarray, y: Sequence[float],
                   epsilon: float) -> float:
    """Dual objective value at the model's stored dual variables."""
    y = np.asarray(y, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    n = model.n_train
    if y.shape != (n,) or k.shape != (n, n):
        raise ValueError("kernel/target dimensions do not match the model")
    beta = model.beta
    return float(beta @ y - epsilon * (model.alpha_plus.sum() + model.alpha_minus.sum())
                 - 0.5 * beta @ (k @ beta))


def model_to_json(model: SvrModel) -> str:
    """Serialize ids, coefficients, bias, config and convergence flag."""
    doc = {
        "train_user_ids": list(model.train_user_ids) if model.train_user_ids else None,
        "beta": model.beta.tolist(),
        "bias": model.bias,
        "config": {
            "C": model.config.C,
            "epsilon": model.config.epsilon,
            "tol": model.config.tol,
            "max_passes": model.config.max_passes,
        },
        "converged": model.converged,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text: str) -> SvrModel:
    doc = json.loads(text)
    beta = np.asarray(doc["beta"], dtype=np.float64)
    ap = np.maximum(beta, 0.0)
    am = np.maximum(-beta, 0.0)
    cfg = SvrConfig(**doc["config"])
    return SvrModel(
        beta=beta,
        bias=float(doc["bias"]),
        alpha_plus=ap,
        alpha_minus=am,
        support=np.nonzero(beta)[0],
        converged=bool(doc["converged"]),
        iterations=0,
        kkt_violation=float("nan"),
        config=cfg,
        train_user_ids=tuple(doc["train_user_ids"]) if doc["train_user_ids"] else None,
    )
