"""Cross-validated rating-prediction benchmark over all registered methods.

Protocol: users are split into k folds; per repetition the split is
reseeded.  Within a fold, each item is handled independently: the
kernel-backed methods train one model per item on the training-fold
users who rated it and predict the test-fold raters; the neighbor and
collaborative-filtering baselines predict each test pair directly from
training-fold ratings.  Residuals are pooled across folds to give one
RMSE per repetition per method.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Collection, Mapping, Sequence

import numpy as np
import scipy.stats

from . import baselines as bl
from .baselines import BaselineConfig
from .dataset import Dataset, split_folds
from .graph import FRIEND_BIN_LABELS, ZERO_FRIEND_BIN, SocialGraph, bfs_levels, degree_bin
from .kernels import (KERNEL_ORDER, KernelConfig, KernelMatrix,
                      action_overlap_kernel, build_kernel_bank, default_sigma,
                      rating_bias_kernel)
from .mkl import MklConfig, combine_kernel_rows, combine_kernels, fit_nlmkl, \
    project_onto_ball, _gradient_vector
from .svr import SvrConfig, dual_objective, train_svr

RATING_RANGE = (1.0, 10.0)

KERNEL_SVR_METHODS = {
    "K_ID": "ID", "K_CT": "CT", "K_COM": "COM", "K_DEM": "DEM",
    "K_CLA": "CLA", "K_ACT1": "ACT1", "K_ACT2": "ACT2",
}
CF_METHODS = {
    "CF-S_ID": ("ID",), "CF-S_CT": ("CT",), "CF-S_COM": ("COM",),
    "CF-S_DEM": ("DEM",), "CF-S_CLA": ("CLA",), "CF-S_ACT1": ("ACT1",),
    "CF-S_ACT2": ("ACT2",), "CF-S_AVG": "avg",
    "CF-S_ID-S_ACT2": ("ID", "ACT2"), "CF-S_CT-S_ACT2": ("CT", "ACT2"),
}
UCF_METHODS = {
    "UCF-S_Pearson": None, "UCF-S_ID-S_Pearson": "ID", "UCF-S_CT-S_Pearson": "CT",
}

METHOD_NAMES = (
    "NI", "MNI",
    "CF-S_ID", "CF-S_CT", "CF-S_COM", "CF-S_DEM", "CF-S_CLA", "CF-S_ACT1",
    "CF-S_ACT2", "CF-S_AVG", "CF-S_ID-S_ACT2", "CF-S_CT-S_ACT2",
    "UCF-S_Pearson", "UCF-S_ID-S_Pearson", "UCF-S_CT-S_Pearson",
    "K_ID", "K_CT", "K_COM", "K_DEM", "K_CLA", "K_ACT1", "K_ACT2",
    "COMBINED",
)


@dataclass(frozen=True)
class HarnessConfig:
    """Run-wide switches for the benchmark protocol."""

    clamp: bool = True
    strict_leakage: bool = False
    shared_eta: bool = False
    min_train: int = 2
    per_fold_rmse: bool = False
    n_jobs: int = 1
    tune_mni: bool = True

    def validate(self) -> None:
        if self.min_train < 1:
            raise ValueError("min_train must be >= 1")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")


def rmse(predictions: Sequence[float], actuals: Sequence[float]) -> float:
    """Root mean squared difference over the evaluated pairs."""
    p = np.asarray(predictions, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError("predictions and actuals must have equal length")
    if p.size == 0:
        raise ValueError("rmse is undefined on empty input")
    return float(np.sqrt(np.mean((p - a) ** 2)))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float


def paired_t_test(rmse_a: Sequence[float], rmse_b: Sequence[float]) -> TTestResult:
    """Two-sided paired t test over per-repetition scores.

    When every difference is identical the variance is zero: equal
    vectors give (t=0, p=1); a constant nonzero shift gives t of
    infinite magnitude with p=0.
    """
    a = np.asarray(rmse_a, dtype=np.float64)
    b = np.asarray(rmse_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("need at least two paired values")
    d = a - b
    sd = float(np.std(d, ddof=1))
    mean = float(d.mean())
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0)
        return TTestResult(math.copysign(math.inf, mean), 0.0)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(scipy.stats.t.sf(abs(t), n - 1))
    return TTestResult(t, p)


@dataclass
class PairTable:
    """Per-pair raw results for one method (predictions unclamped)."""

    rep: np.ndarray
    fold: np.ndarray
    user: np.ndarray
    item: np.ndarray
    prediction: np.ndarray
    actual: np.ndarray
    fallback: np.ndarray

    @classmethod
    def from_rows(cls, rows: list[tuple]) -> "PairTable":
        if rows:
            rep, fold, user, item, pred, actual, fb = map(np.asarray, zip(*rows))
        else:
            rep = fold = user = item = np.zeros(0, dtype=np.int64)
            pred = actual = np.zeros(0)
            fb = np.zeros(0, dtype=bool)
        return cls(rep.astype(np.int64), fold.astype(np.int64),
                   user.astype(np.int64), item.astype(np.int64),
                   pred.astype(np.float64), actual.astype(np.float64),
                   fb.astype(bool))

    def clamped_predictions(self, clamp: bool) -> np.ndarray:
        if not clamp:
            return self.prediction
        return np.clip(self.prediction, RATING_RANGE[0], RATING_RANGE[1])


@dataclass
class MethodResult:
    name: str
    rmse_mean: float
    rmse_std: float
    rmse_per_rep: tuple[float, ...]
    coverage: float
    seconds: float
    rmse_mean_noclamp: float


@dataclass
class EvaluationReport:
    config: dict
    methods: list[MethodResult]
    eta_average: list[float] | None
    bins: dict[str, dict[str, float]]
    pairs: dict[str, PairTable] = field(repr=False, default_factory=dict)

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "methods": [
                {
                    "name": m.name,
                    "rmse_mean": m.rmse_mean,
                    "rmse_std": m.rmse_std,
                    "rmse_per_rep": list(m.rmse_per_rep),
                    "coverage": m.coverage,
                    "seconds": m.seconds,
                    "rmse_mean_noclamp": m.rmse_mean_noclamp,
                }
                for m in self.methods
            ],
            "eta_average": self.eta_average,
            "bins": self.bins,
        }


def friend_bin_table(pairs: Mapping[str, PairTable], graph: SocialGraph,
                     clamp: bool = True) -> dict[str, dict[str, float]]:
    """RMSE per friend-count bin per method.

    Pairs are grouped by the predicted user's degree bin; zero-degree
    users land in a separate "0" row that is only emitted when present.
    """
    degrees = graph.degrees
    out: dict[str, dict[str, float]] = {}
    labels = FRIEND_BIN_LABELS + (ZERO_FRIEND_BIN,)
    for method, table in pairs.items():
        if table.user.size == 0:
            continue
        bins_of_pairs = np.array([degree_bin(int(degrees[u])) for u in table.user])
        preds = table.clamped_predictions(clamp)
        errs = (preds - table.actual) ** 2
        for label in labels:
            mask = bins_of_pairs == label
            if not mask.any():
                continue
            out.setdefault(label, {})[method] = float(np.sqrt(errs[mask].mean()))
    return out


# ---------------------------------------------------------------------------
# the cross-validation engine


class _FoldContext:
    """Everything shared by item evaluations inside one fold."""

    def __init__(self, dataset: Dataset, bank, train_users: set[int],
                 test_users: set[int], train_global_mean: float,
                 mni_damping: float, level_cache: dict,
                 pearson_cache: dict, configs):
        self.dataset = dataset
        self.bank = bank
        self.train_users = train_users
        self.test_users = test_users
        self.train_global_mean = train_global_mean
        self.mni_damping = mni_damping
        self.level_cache = level_cache
        self.pearson_cache = pearson_cache
        (self.svr_config, self.mkl_config, self.baseline_config,
         self.harness) = configs
        self.cf_similarities: dict[str, np.ndarray] = {}
        self.shared_eta_vec: np.ndarray | None = None

    def levels_for(self, v: int, max_level: int):
        key = v
        if key not in self.level_cache:
            self.level_cache[key] = bfs_levels(self.dataset.graph, v, max_level)
        return self.level_cache[key]

    def pearson(self, a: int, b: int) -> float:
        key = (a, b) if a < b else (b, a)
        if key not in self.pearson_cache:
            self.pearson_cache[key] = bl.pearson_similarity(self.dataset.ratings, a, b)
        return self.pearson_cache[key]

    def cf_similarity(self, name: str) -> np.ndarray:
        if name not in self.cf_similarities:
            spec = CF_METHODS[name]
            if spec == "avg":
                mats = [self.bank[label].values for label in KERNEL_ORDER[1:]]
                sim = np.mean(mats, axis=0)
            else:
                sim = sum(self.bank[label].values for label in spec)
            self.cf_similarities[name] = sim
        return self.cf_similarities[name]


def _eval_item(ctx: _FoldContext, methods: Sequence[str], item: int):
    """All requested methods on one item; returns rows and timings."""
    ratings = ctx.dataset.ratings
    raters = ratings.raters_of(item)
    test_raters = sorted(u for u in raters if u in ctx.test_users)
    if not test_raters:
        return None
    train_raters = sorted(u for u in raters if u in ctx.train_users)
    y = np.array([raters[u] for u in train_raters], dtype=np.float64)
    idx = np.asarray(train_raters, dtype=np.int64)
    test_idx = np.asarray(test_raters, dtype=np.int64)
    actuals = np.array([raters[u] for u in test_raters])
    trainable = len(train_raters) >= ctx.harness.min_train

    rows: dict[str, list[tuple]] = {m: [] for m in methods}
    seconds: dict[str, float] = {m: 0.0 for m in methods}
    eta_out = None

    def record(method, preds, fallback_flags):
        for u, pred, actual, fb in zip(test_raters, preds, actuals, fallback_flags):
            rows[method].append((u, item, float(pred), float(actual), bool(fb)))

    fallback_preds = np.full(len(test_raters), ctx.train_global_mean)
    all_fb = np.ones(len(test_raters), dtype=bool)
    no_fb = np.zeros(len(test_raters), dtype=bool)

    for method in methods:
        t0 = time.perf_counter()
        if method in KERNEL_SVR_METHODS:
            if not trainable:
                record(method, fallback_preds, all_fb)
            else:
                kernel = ctx.bank[KERNEL_SVR_METHODS[method]].values
                model = train_svr(kernel[np.ix_(idx, idx)], y, ctx.svr_config)
                preds = kernel[np.ix_(test_idx, idx)] @ model.beta + model.bias
                record(method, preds, no_fb)
        elif method == "COMBINED":
            if not trainable:
                record(method, fallback_preds, all_fb)
            else:
                subs = [ctx.bank[label].values[np.ix_(idx, idx)] for label in KERNEL_ORDER]
                state, model = fit_nlmkl(subs, None, y, ctx.svr_config, ctx.mkl_config)
                test_rows = [ctx.bank[label].values[np.ix_(test_idx, idx)]
                             for label in KERNEL_ORDER]
                k_rows = combine_kernel_rows(test_rows, state.eta, ctx.mkl_config.degree)
                preds = k_rows @ model.beta + model.bias
                record(method, preds, no_fb)
                eta_out = np.asarray(state.eta)
        else:
            preds = []
            fbs = []
            cfg = ctx.baseline_config
            for v in test_raters:
                raw = _baseline_predict(ctx, method, v, item, cfg)
                if raw is None:
                    preds.append(ctx.train_global_mean)
                    fbs.append(True)
                else:
                    preds.append(raw)
                    fbs.append(False)
            record(method, preds, fbs)
        seconds[method] += time.perf_counter() - t0

    return item, rows, seconds, eta_out


def _baseline_predict(ctx: _FoldContext, method: str, v: int, item: int,
                      cfg: BaselineConfig) -> float | None:
    """Raw baseline prediction (no fallback) for one test pair."""
    ratings = ctx.dataset.ratings
    graph = ctx.dataset.graph
    none_cfg = BaselineConfig(damping=ctx.mni_damping, max_level=cfg.max_level,
                              normalize=cfg.normalize, fallback="none")
    if method == "NI":
        return bl.predict_ni(graph, ratings, v, item, none_cfg,
                             allowed=ctx.train_users)
    if method == "MNI":
        levels = ctx.levels_for(v, cfg.max_level)
        return bl.predict_mni(graph, ratings, v, item, none_cfg,
                              allowed=ctx.train_users, levels=levels)
    if method in CF_METHODS:
        sim = ctx.cf_similarity(method)
        return bl.predict_cf(sim, ratings, v, item, none_cfg,
                             allowed=ctx.train_users)
    if method in UCF_METHODS:
        label = UCF_METHODS[method]
        if label is None:
            sim = lambda a, b: ctx.pearson(a, b)
        else:
            kernel = ctx.bank[label].values
            sim = lambda a, b: float(kernel[a, b]) + ctx.pearson(a, b)
        return bl.predict_ucf_bias(sim, ratings, v, item, none_cfg,
                                   allowed=ctx.train_users)
    raise AssertionError(f"unhandled method {method}")


def _needs_kernels(methods: Sequence[str]) -> bool:
    for m in methods:
        if m in KERNEL_SVR_METHODS or m == "COMBINED" or m in CF_METHODS:
            return True
        if m in UCF_METHODS and UCF_METHODS[m] is not None:
            return True
    return False


def _tuned_mni_damping(dataset: Dataset, train_users: set[int],
                       cfg: BaselineConfig, seed_key: list[int]) -> float:
    rng = np.random.default_rng(seed_key)
    train_list = sorted(train_users)
    if len(train_list) < 5:
        return cfg.damping
    rng.shuffle(train_list)
    n_tune = max(1, len(train_list) // 5)
    tuning_users = train_list[:n_tune]
    sources = set(train_list[n_tune:])
    pairs = [(v, w, r) for v in tuning_users
             for w, r in sorted(dataset.ratings.items_of(v).items())]
    if len(pairs) > 2000:
        pairs = pairs[:2000]
    if not pairs:
        return cfg.damping
    return bl.tune_mni_damping(dataset.graph, dataset.ratings, pairs, sources, cfg)


def _shared_eta_fit(ctx: _FoldContext, item_ctxs: list[tuple[int, np.ndarray, np.ndarray]]):
    """One weight vector for a whole fold, fitted on the summed dual optima."""
    mkl_config = ctx.mkl_config
    svr_config = ctx.svr_config
    subs_by_item = {}
    for item, idx, y in item_ctxs:
        subs_by_item[item] = [ctx.bank[label].values[np.ix_(idx, idx)]
                              for label in KERNEL_ORDER]
    eta0 = mkl_config.resolve_eta0(len(KERNEL_ORDER))
    eta = project_onto_ball(eta0, eta0, mkl_config.radius)

    def solve_all(eta_vec, warm):
        models, f_tot = {}, 0.0
        for item, idx, y in item_ctxs:
            k_eta = combine_kernels(subs_by_item[item], eta_vec, mkl_config.degree)
            model = train_svr(k_eta.values, y, svr_config,
                              warm_start=warm.get(item) if warm else None)
            f_tot += dual_objective(model, k_eta.values, y, svr_config.epsilon)
            models[item] = model
        return models, f_tot

    models, f_val = solve_all(eta, None)
    for _ in range(mkl_config.max_iters):
        grad = np.zeros(len(KERNEL_ORDER))
        for item, idx, y in item_ctxs:
            beta = models[item].alpha_plus - models[item].alpha_minus
            grad += _gradient_vector(beta, subs_by_item[item], eta, mkl_config.degree)
        step = mkl_config.step_size
        accepted = None
        warm = {item: (m.alpha_plus, m.alpha_minus) for item, m in models.items()}
        for _ in range(mkl_config.max_halvings + 1):
            cand = project_onto_ball(eta - step * grad, eta0, mkl_config.radius)
            cand_models, cand_f = solve_all(cand, warm)
            if cand_f <= f_val + 1e-9:
                accepted = (cand, cand_models, cand_f)
                break
            step /= 2.0
        if accepted is None:
            break
        delta = float(np.linalg.norm(accepted[0] - eta))
        eta, models, new_f = accepted
        moved = abs(new_f - f_val)
        f_val = new_f
        if delta < mkl_config.tol or moved < mkl_config.tol:
            break
    return eta, models


def run_cross_validation(dataset: Dataset, methods: Sequence[str], k: int = 10,
                         repetitions: int = 10, seed: int = 0, *,
                         kernel_config: KernelConfig | None = None,
                         svr_config: SvrConfig | None = None,
                         mkl_config: MklConfig | None = None,
                         baseline_config: BaselineConfig | None = None,
                         harness_config: HarnessConfig | None = None,
                         kernel_bank: Mapping[str, KernelMatrix] | None = None,
                         ) -> EvaluationReport:
    """Full benchmark; see the module docstring for the protocol."""
    methods = list(methods)
    if not methods:
        raise ValueError("methods must be nonempty")
    unknown = [m for m in methods if m not in METHOD_NAMES]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; valid names: {list(METHOD_NAMES)}")
    if len(set(methods)) != len(methods):
        raise ValueError("duplicate method names")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")

    kernel_config = kernel_config or KernelConfig()
    svr_config = svr_config or SvrConfig()
    mkl_config = mkl_config or MklConfig()
    baseline_config = baseline_config or BaselineConfig()
    harness = harness_config or HarnessConfig()
    for cfg in (kernel_config, svr_config, mkl_config, baseline_config, harness):
        cfg.validate()

    bank = None
    if _needs_kernels(methods):
        bank = dict(kernel_bank) if kernel_bank is not None else \
            build_kernel_bank(dataset, kernel_config, seed=seed)

    ratings = dataset.ratings
    n = dataset.n_users
    rows_all: dict[str, list[tuple]] = {m: [] for m in methods}
    seconds: dict[str, float] = {m: 0.0 for m in methods}
    eta_sum = np.zeros(len(KERNEL_ORDER))
    eta_count = 0
    level_cache: dict = {}
    pearson_cache: dict = {}

    for rep in range(repetitions):
        folds = split_folds(dataset, k, seed + rep)
        for fold in range(k):
            test_users = set(int(u) for u in folds.members(fold))
            train_users = set(range(n)) - test_users

            fold_bank = bank
            if bank is not None and harness.strict_leakage:
                mask = {(u, i) for u in test_users for i in ratings.items_of(u)}
                sigma = kernel_config.sigma if kernel_config.sigma is not None \
                    else default_sigma(ratings, mask)
                fold_bank = dict(bank)
                fold_bank["ACT1"] = action_overlap_kernel(ratings, n, mask)
                fold_bank["ACT2"] = rating_bias_kernel(ratings, n, sigma, mask)

            tr_sum, tr_count = 0.0, 0
            for u in train_users:
                for r in ratings.items_of(u).values():
                    tr_sum += r
                    tr_count += 1
            train_global_mean = tr_sum / tr_count if tr_count else \
                (ratings.global_mean if ratings.global_mean is not None else 5.5)

            mni_damping = baseline_config.damping
            if "MNI" in methods and harness.tune_mni:
                mni_damping = _tuned_mni_damping(dataset, train_users,
                                                 baseline_config, [seed, rep, fold])

            ctx = _FoldContext(dataset, fold_bank, train_users, test_users,
                               train_global_mean, mni_damping, level_cache,
                               pearson_cache,
                               (svr_config, mkl_config, baseline_config, harness))

            item_methods = methods
            shared_models = None
            if "COMBINED" in methods and harness.shared_eta:
                item_ctxs = []
                for w in range(dataset.n_items):
                    raters = ratings.raters_of(w)
                    if not any(u in test_users for u in raters):
                        continue
                    tr = sorted(u for u in raters if u in train_users)
                    if len(tr) >= harness.min_train:
                        item_ctxs.append((w, np.asarray(tr, dtype=np.int64),
                                          np.array([raters[u] for u in tr])))
                t0 = time.perf_counter()
                if item_ctxs:
                    shared_eta, shared_models = _shared_eta_fit(ctx, item_ctxs)
                    eta_sum += shared_eta
                    eta_count += 1
                    ctx.shared_eta_vec = shared_eta
                seconds["COMBINED"] += time.perf_counter() - t0

            results = []
            items = list(range(dataset.n_items))
            if harness.n_jobs > 1:
                with concurrent.futures.ThreadPoolExecutor(harness.n_jobs) as pool:
                    futures = [pool.submit(_eval_item_dispatch, ctx, item_methods, w,
                                           shared_models)
                               for w in items]
                    results = [f.result() for f in futures]
            else:
                results = [_eval_item_dispatch(ctx, item_methods, w, shared_models)
                           for w in items]

            for res in results:
                if res is None:
                    continue
                item, rows, item_seconds, eta_out = res
                for m, lst in rows.items():
                    rows_all[m].extend((rep, fold, *row) for row in lst)
                for m, s in item_seconds.items():
                    seconds[m] += s
                if eta_out is not None and not harness.shared_eta:
                    eta_sum += eta_out
                    eta_count += 1

    pairs = {m: PairTable.from_rows(rows_all[m]) for m in methods}
    results_out = []
    for m in methods:
        table = pairs[m]
        per_rep = []
        per_rep_raw = []
        for rep in range(repetitions):
            mask = table.rep == rep
            if not mask.any():
                per_rep.append(float("nan"))
                per_rep_raw.append(float("nan"))
                continue
            preds_c = table.clamped_predictions(harness.clamp)[mask]
            preds_r = table.prediction[mask]
            act = table.actual[mask]
            if harness.per_fold_rmse:
                fold_vals = []
                fold_vals_raw = []
                for f in np.unique(table.fold[mask]):
                    fm = mask & (table.fold == f)
                    fold_vals.append(rmse(table.clamped_predictions(harness.clamp)[fm],
                                          table.actual[fm]))
                    fold_vals_raw.append(rmse(table.prediction[fm], table.actual[fm]))
                per_rep.append(float(np.mean(fold_vals)))
                per_rep_raw.append(float(np.mean(fold_vals_raw)))
            else:
                per_rep.append(rmse(preds_c, act))
                per_rep_raw.append(rmse(preds_r, act))
        arr = np.asarray(per_rep)
        std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
        coverage = float(1.0 - table.fallback.mean()) if table.fallback.size else 0.0
        results_out.append(MethodResult(
            name=m,
            rmse_mean=float(np.mean(arr)),
            rmse_std=std,
            rmse_per_rep=tuple(float(x) for x in per_rep),
            coverage=coverage,
            seconds=round(seconds[m], 6),
            rmse_mean_noclamp=float(np.mean(per_rep_raw)),
        ))

    eta_average = (eta_sum / eta_count).tolist() if eta_count else None
    bins = friend_bin_table(pairs, dataset.graph, clamp=harness.clamp)
    config_snapshot = {
        "methods": methods,
        "folds": k,
        "repetitions": repetitions,
        "seed": seed,
        "kernel": asdict(kernel_config),
        "svr": asdict(svr_config),
        "mkl": {**asdict(mkl_config),
                "eta0": list(mkl_config.eta0) if mkl_config.eta0 else None},
        "baseline": asdict(baseline_config),
        "harness": asdict(harness),
    }
    return EvaluationReport(config=config_snapshot, methods=results_out,
                            eta_average=eta_average, bins=bins, pairs=pairs)


def _eval_item_dispatch(ctx, methods, item, shared_models):
    """Swap in fold-shared combined models when shared-eta mode is on."""
    if shared_models is None:
        return _eval_item(ctx, methods, item)
    res = _eval_item(ctx, [m for m in methods if m != "COMBINED"], item)
    if res is None:
        return None
    ratings = ctx.dataset.ratings
    raters = ratings.raters_of(item)
    test_raters = sorted(u for u in raters if u in ctx.test_users)
    item_id, rows, secs, eta_out = res
    t0 = time.perf_counter()
    rows["COMBINED"] = []
    actuals = [raters[u] for u in test_raters]
    if item in shared_models:
        model = shared_models[item]
        train_raters = sorted(u for u in raters if u in ctx.train_users)
        idx = np.asarray(train_raters, dtype=np.int64)
        test_idx = np.asarray(test_raters, dtype=np.int64)
        test_rows = [ctx.bank[label].values[np.ix_(test_idx, idx)]
                     for label in KERNEL_ORDER]
        k_rows = combine_kernel_rows(test_rows, ctx.shared_eta_vec,
                                     ctx.mkl_config.degree)
        preds = k_rows @ model.beta + model.bias
        for u, pred, actual in zip(test_raters, preds, actuals):
            rows["COMBINED"].append((u, item, float(pred), float(actual), False))
    else:
        for u, actual in zip(test_raters, actuals):
            rows["COMBINED"].append((u, item, ctx.train_global_mean, float(actual), True))
    secs = dict(secs)
    secs["COMBINED"] = time.perf_counter() - t0
    return item_id, rows, secs, eta_out


# ---------------------------------------------------------------------------
# report files


def export_report(report: EvaluationReport, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json plus the three summary CSVs; returns name -> path."""
    if not report.methods:
        raise ValueError("report has no methods; nothing to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    path = out / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["report.json"] = path

    path = out / "table3.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "rmse_mean", "rmse_std"])
        for m in report.methods:
            writer.writerow([m.name, f"{m.rmse_mean:.6f}", f"{m.rmse_std:.6f}"])
    paths["table3.csv"] = path

    path = out / "table4.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ONES", "K_ID", "K_CT", "K_COM", "K_DEM", "K_CLA",
                         "K_ACT1", "K_ACT2"])
        if report.eta_average is not None:
            writer.writerow([f"{v:.6f}" for v in report.eta_average])
    paths["table4.csv"] = path

    path = out / "fig4.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        names = [m.name for m in report.methods]
        writer.writerow(["bin"] + names)
        for label in FRIEND_BIN_LABELS + (ZERO_FRIEND_BIN,):
            if label not in report.bins:
                continue
            row = [label]
            for name in names:
                value = report.bins[label].get(name)
                row.append(f"{value:.6f}" if value is not None else "")
            writer.writerow(row)
    paths["fig4.csv"] = path
    return paths
