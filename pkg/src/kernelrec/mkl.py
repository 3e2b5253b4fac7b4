"""Degree-2 non-linear kernel combination with learned weights.

Kernels are combined as the entrywise square of the weighted sum
(degree 2) or the plain weighted sum (degree 1).  The squared form is
algebraically identical to summing eta_m * eta_h * K_m o K_h over all
kernel pairs but costs O(P) per entry instead of O(P^2).

The weights are fitted by alternating an inner SVR solve on the
combined kernel with an outer projected gradient step on the SVR dual
optimum, the weights living in the intersection of the nonnegative
orthant and a ball around a chosen center.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .kernels import KernelMatrix
from .svr import SvrConfig, SvrModel, dual_objective, train_svr

_BALL_EPS = 1e-12


@dataclass(frozen=True)
class MklConfig:
    """Feasible-set geometry and outer-loop controls.

    ``eta0`` defaults to the uniform unit-norm vector.  The step size
    is halved (up to ``max_halvings`` times) whenever a step would
    increase the outer objective.
    """

    eta0: tuple[float, ...] | None = None
    radius: float = 1.0
    step_size: float = 0.1
    max_iters: int = 20
    tol: float = 1e-5
    degree: int = 2
    max_halvings: int = 10

    def validate(self) -> None:
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if self.max_iters < 0 or self.max_halvings < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.eta0 is not None and any(e < 0 for e in self.eta0):
            raise ValueError("eta0 entries must be >= 0")

    def resolve_eta0(self, p: int) -> np.ndarray:
        if self.eta0 is None:
            return np.full(p, 1.0 / np.sqrt(p))
        eta0 = np.asarray(self.eta0, dtype=np.float64)
        if eta0.shape != (p,):
            raise ValueError(f"eta0 has length {len(eta0)}, expected {p}")
        return eta0


@dataclass
class MklState:
    """Fitted weights plus the outer-objective trace."""

    eta: np.ndarray
    objective_trace: tuple[float, ...]
    eta_trace: tuple[tuple[float, ...], ...]
    converged: bool
    iterations: int
    eta0: np.ndarray
    radius: float


def _kernel_values(kernels: Sequence[KernelMatrix | np.ndarray]) -> list[np.ndarray]:
    mats = [k.values if isinstance(k, KernelMatrix) else np.asarray(k, float)
            for k in kernels]
    n = mats[0].shape[0]
    for m in mats:
        if m.shape != (n, n):
            raise ValueError("all kernels must share the same dimension")
    return mats


def combine_kernels(kernels: Sequence[KernelMatrix | np.ndarray],
                    eta: Sequence[float], degree: int = 2) -> KernelMatrix:
    """Weighted non-linear combination of the kernel bank.

    Degree 2 squares the weighted sum entrywise, which expands to every
    pairwise Hadamard product of the inputs; with the all-ones kernel
    in the bank this keeps plain first-order terms in play.  Output is
    PSD for any nonnegative weights.
    """
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    mats = _kernel_values(kernels)
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (len(mats),):
        raise ValueError(f"eta has length {len(eta)}, expected {len(mats)}")
    s = np.zeros_like(mats[0])
    for w, m in zip(eta, mats):
        s += w * m
    out = s * s if degree == 2 else s
    out = (out + out.T) / 2.0
    return KernelMatrix(out, "COMBINED")


def combine_kernel_rows(rows: Sequence[np.ndarray], eta: Sequence[float],
                        degree: int = 2) -> np.ndarray:
    """Same combination applied to cross-kernel rows (query x train)."""
    eta = np.asarray(eta, dtype=np.float64)
    s = np.zeros_like(np.asarray(rows[0], dtype=np.float64))
    for w, r in zip(eta, rows):
        s = s + w * np.asarray(r, dtype=np.float64)
    return s * s if degree == 2 else s


def mkl_gradient(alpha_plus: np.ndarray, alpha_minus: np.ndarray,
                 kernels: Sequence[KernelMatrix | np.ndarray],
                 eta: Sequence[float], k: int) -> float:
    """Partial derivative of the degree-2 dual optimum w.r.t. weight ``k``.

    Closed form: -(a+ - a-)' (sum_h eta_h K_h o K_k) (a+ - a-).
    """
    mats = _kernel_values(kernels)
    if not (0 <= k < len(mats)):
        raise ValueError(f"kernel index {k} out of range")
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (len(mats),):
        raise ValueError("eta length does not match the kernel bank")
    beta = np.asarray(alpha_plus, float) - np.asarray(alpha_minus, float)
    if beta.shape != (mats[0].shape[0],):
        raise ValueError("dual variables do not match kernel dimension")
    s = np.zeros_like(mats[0])
    for w, m in zip(eta, mats):
        s += w * m
    return float(-beta @ ((s * mats[k]) @ beta))


def _gradient_vector(beta: np.ndarray, mats: Sequence[np.ndarray],
                     eta: np.ndarray, degree: int) -> np.ndarray:
    if degree == 2:
        s = np.zeros_like(mats[0])
        for w, m in zip(eta, mats):
            s += w * m
        return np.array([-beta @ ((s * m) @ beta) for m in mats])
    return np.array([-0.5 * beta @ (m @ beta) for m in mats])


def project_onto_ball(eta: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Map onto {v >= 0, ||v - center|| <= radius} for a nonnegative center.

    Alternates clipping negatives and radially rescaling toward the
    center until both constraints hold (at most 50 rounds; with a
    nonnegative center two rounds suffice, the loop guards float
    rounding).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    if (center < 0).any():
        raise ValueError("ball center must be nonnegative")
    v = np.asarray(eta, dtype=np.float64).copy()
    for _ in range(50):
        v = np.maximum(v, 0.0)
        gap = v - center
        dist = float(np.linalg.norm(gap))
        if dist <= radius + _BALL_EPS:
            break
        v = center + (radius / dist) * gap
    v = np.maximum(v, 0.0)
    assert float(np.linalg.norm(v - center)) <= radius + 1e-9
    return v


def fit_nlmkl(kernels: Sequence[KernelMatrix | np.ndarray], train_users,
              y: Sequence[float], svr_config: SvrConfig | None = None,
              mkl_config: MklConfig | None = None) -> tuple[MklState, SvrModel]:
    """Alternating inner-SVR / outer projected-gradient weight fitting.

    ``kernels`` must put the all-ones kernel first; ``train_users``
    restricts full matrices to a training submatrix (pass ``None`` if
    the kernels are already restricted).  The outer objective is the
    SVR dual optimum as a function of the weights; a step is accepted
    only if it does not increase that objective (backtracking halves
    the step otherwise), so the recorded trace is non-increasing.
    """
    svr_config = svr_config or SvrConfig()
    mkl_config = mkl_config or MklConfig()
    mkl_config.validate()
    mats = _kernel_values(kernels)
    if train_users is not None:
        idx = np.asarray(train_users, dtype=np.int64)
        mats = [m[np.ix_(idx, idx)] for m in mats]
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (mats[0].shape[0],):
        raise ValueError("targets do not match the (restricted) kernel dimension")

    p = len(mats)
    eta0 = mkl_config.resolve_eta0(p)
    eta = project_onto_ball(eta0, eta0, mkl_config.radius)
    degree = mkl_config.degree

    def solve(eta_vec, warm=None):
        k_eta = combine_kernels(mats, eta_vec, degree)
        model = train_svr(k_eta.values, y, svr_config, warm_start=warm)
        f_val = dual_objective(model, k_eta.values, y, svr_config.epsilon)
        return model, f_val

    try:
        model, f_val = solve(eta)
    except Exception as exc:
        raise type(exc)(f"inner SVR failed at iteration 0: {exc}") from exc
    trace = [f_val]
    eta_trace = [tuple(eta.tolist())]
    converged = False
    iterations = 0

    for it in range(1, mkl_config.max_iters + 1):
        beta = model.alpha_plus - model.alpha_minus
        grad = _gradient_vector(beta, mats, eta, degree)
        step = mkl_config.step_size
        accepted = None
        for _ in range(mkl_config.max_halvings + 1):
            cand = project_onto_ball(eta - step * grad, eta0, mkl_config.radius)
            try:
                cand_model, cand_f = solve(cand, warm=(model.alpha_plus, model.alpha_minus))
            except Exception as exc:
                raise type(exc)(f"inner SVR failed at iteration {it}: {exc}") from exc
            if cand_f <= f_val + 1e-9:
                accepted = (cand, cand_model, cand_f)
                break
            step /= 2.0
        if accepted is None:
            converged = True
            break
        cand, cand_model, cand_f = accepted
        delta_eta = float(np.linalg.norm(cand - eta))
        delta_f = abs(cand_f - f_val)
        eta, model, f_val = cand, cand_model, cand_f
        trace.append(f_val)
        eta_trace.append(tuple(eta.tolist()))
        iterations = it
        if delta_eta < mkl_config.tol or delta_f < mkl_config.tol:
            converged = True
            break

    state = MklState(
        eta=eta,
        objective_trace=tuple(trace),
        eta_trace=tuple(eta_trace),
        converged=converged,
        iterations=iterations,
        eta0=eta0,
        radius=mkl_config.radius,
    )
    return state, model


def write_eta_trace(state: MklState, path: str | Path) -> None:
    """CSV export: iteration, objective value, then one column per weight."""
    p = len(state.eta)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "F"] + [f"eta_{i}" for i in range(p)])
        for i, (f_val, eta) in enumerate(zip(state.objective_trace, state.eta_trace)):
            writer.writerow([i, repr(f_val)] + [repr(e) for e in eta])
