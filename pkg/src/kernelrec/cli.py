"""Command-line entry point: synth, kernels, evaluate and report subcommands.

Runs are driven by a JSON config document; most fields can be
overridden by flags.  Logging goes to stderr; machine-readable output
goes to files or stdout only.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import BaselineConfig
from .dataset import (Dataset, SyntheticParams, generate_synthetic,
                      load_dataset, write_dataset_csvs)
from .evaluation import (METHOD_NAMES, HarnessConfig, export_report,
                         run_cross_validation)
from .kernels import (KERNEL_ORDER, KernelConfig, build_kernel_bank,
                      load_kernel, save_kernel, validate_psd)
from .mkl import MklConfig
from .svr import SvrConfig

logger = logging.getLogger("kernelrec")

USAGE_ERROR = 2


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    return doc


def _build_configs(doc: dict, args) -> dict:
    """Merge config-file sections with flag overrides."""
    cfg = {
        "kernel": KernelConfig(**doc.get("kernel", {})),
        "svr": SvrConfig(**doc.get("svr", {})),
        "mkl": MklConfig(**{**doc.get("mkl", {}),
                            **({"eta0": tuple(doc["mkl"]["eta0"])}
                               if doc.get("mkl", {}).get("eta0") else {})}),
        "baseline": BaselineConfig(**doc.get("baseline", {})),
    }
    harness_doc = dict(doc.get("harness", {}))
    if args.clamp is not None:
        harness_doc["clamp"] = args.clamp
    if getattr(args, "strict_leakage", False):
        harness_doc["strict_leakage"] = True
    if getattr(args, "shared_eta", False):
        harness_doc["shared_eta"] = True
    if getattr(args, "threads", None):
        harness_doc["n_jobs"] = args.threads
    cfg["harness"] = HarnessConfig(**harness_doc)
    if getattr(args, "normalize_mni", False):
        cfg["baseline"] = BaselineConfig(**{**asdict(cfg["baseline"]), "normalize": True})

    cfg["methods"] = (args.methods.split(",") if getattr(args, "methods", None)
                      else doc.get("methods", ["NI", "MNI", "COMBINED"]))
    cfg["folds"] = args.folds if getattr(args, "folds", None) else doc.get("folds", 10)
    cfg["reps"] = args.reps if getattr(args, "reps", None) else doc.get("repetitions", 10)
    cfg["seed"] = args.seed if getattr(args, "seed", None) is not None else doc.get("seed", 0)
    cfg["out"] = Path(args.out if getattr(args, "out", None) else doc.get("out_dir", "out"))
    cache = getattr(args, "kernel_cache", None) or doc.get("kernel_cache")
    cfg["kernel_cache"] = Path(cache) if cache else None
    cfg["data"] = doc.get("data")
    cfg["synthetic"] = doc.get("synthetic")
    return cfg


def _load_data(cfg: dict) -> Dataset:
    if cfg.get("data"):
        d = cfg["data"]
        if "ratings" not in d or "friendships" not in d:
            raise UsageError("data section needs 'ratings' and 'friendships' paths")
        return load_dataset(d["ratings"], d["friendships"],
                            d.get("demographics"), d.get("claims"),
                            strict=bool(d.get("strict", False)))
    if cfg.get("synthetic") is not None:
        params = SyntheticParams.from_mapping(cfg["synthetic"])
        return generate_synthetic(params)
    raise UsageError("config must provide either a 'data' or a 'synthetic' section")


def _dataset_fingerprint(dataset: Dataset) -> str:
    h = hashlib.sha256()
    h.update(str(dataset.n_users).encode())
    h.update(str(dataset.n_items).encode())
    for u, i, r in dataset.ratings.entries():
        h.update(f"{u},{i},{r:.6f};".encode())
    for a, b in dataset.graph.edges():
        h.update(f"{a}-{b};".encode())
    return h.hexdigest()[:16]


def _bank_with_cache(dataset: Dataset, kernel_config: KernelConfig,
                     cache_dir: Path | None, seed: int):
    """Build all kernels, reusing a binary cache when it matches the data."""
    if cache_dir is None:
        return build_kernel_bank(dataset, kernel_config, seed=seed)
    cache_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = cache_dir / "manifest.json"
    manifest = {
        "fingerprint": _dataset_fingerprint(dataset),
        "alpha": kernel_config.alpha,
        "sigma": kernel_config.sigma,
        "normalize": kernel_config.normalize,
        "seed": seed,
    }
    if manifest_path.exists():
        try:
            stored = json.loads(manifest_path.read_text())
            if stored == manifest:
                bank = {}
                for label in KERNEL_ORDER:
                    bank[label] = load_kernel(cache_dir / f"{label}.kmat")
                logger.info("kernel cache hit: loaded %d kernels from %s",
                            len(bank), cache_dir)
                return bank
            logger.info("kernel cache stale (config or data changed); rebuilding")
        except (ValueError, OSError) as exc:
            logger.warning("kernel cache unusable (%s); rebuilding", exc)
    bank = build_kernel_bank(dataset, kernel_config, seed=seed)
    for label, kernel in bank.items():
        save_kernel(kernel, cache_dir / f"{label}.kmat")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    logger.info("kernel cache written to %s", cache_dir)
    return bank


def cmd_synth(args) -> int:
    if args.params:
        params = SyntheticParams.from_json(args.params)
    else:
        params = SyntheticParams()
    params.validate()
    dataset = generate_synthetic(params)
    paths = write_dataset_csvs(dataset, args.out)
    print(f"users: {dataset.n_users}")
    print(f"items: {dataset.n_items}")
    print(f"ratings: {dataset.ratings.n_ratings}")
    print(f"friendships: {dataset.graph.n_edges}")
    for name, path in sorted(paths.items()):
        print(f"wrote {path}")
    return 0


def cmd_kernels(args) -> int:
    doc = _load_config(args.config)
    cfg = _build_configs(doc, args)
    dataset = _load_data(cfg)
    bank = _bank_with_cache(dataset, cfg["kernel"], cfg["kernel_cache"], cfg["seed"])
    failures = []
    for label in KERNEL_ORDER:
        report = validate_psd(bank[label], tol=1e-8)
        status = "pass" if report.passed else "FAIL"
        print(f"{label:5s} n={bank[label].n} min_eig={report.min_eig:+.3e} "
              f"max_eig={report.max_eig:+.3e} {status}")
        if not report.passed:
            failures.append(label)
    if failures:
        logger.error("PSD validation failed for: %s", ", ".join(failures))
        return 1
    return 0


def cmd_evaluate(args) -> int:
    doc = _load_config(args.config)
    cfg = _build_configs(doc, args)
    unknown = [m for m in cfg["methods"] if m not in METHOD_NAMES]
    if unknown:
        raise UsageError(f"unknown method(s) {unknown}; valid: {', '.join(METHOD_NAMES)}")
    dataset = _load_data(cfg)
    if args.dry_run:
        print("dry run; execution plan:")
        print(f"  dataset: {dataset!r}")
        print(f"  methods: {', '.join(cfg['methods'])}")
        print(f"  folds: {cfg['folds']}  repetitions: {cfg['reps']}  seed: {cfg['seed']}")
        print(f"  output: {cfg['out']}")
        print(f"  clamp={cfg['harness'].clamp} strict_leakage={cfg['harness'].strict_leakage} "
              f"shared_eta={cfg['harness'].shared_eta} threads={cfg['harness'].n_jobs}")
        return 0
    bank = None
    if cfg["kernel_cache"] is not None:
        bank = _bank_with_cache(dataset, cfg["kernel"], cfg["kernel_cache"], cfg["seed"])
    try:
        report = run_cross_validation(
            dataset, cfg["methods"], k=cfg["folds"], repetitions=cfg["reps"],
            seed=cfg["seed"], kernel_config=cfg["kernel"], svr_config=cfg["svr"],
            mkl_config=cfg["mkl"], baseline_config=cfg["baseline"],
            harness_config=cfg["harness"], kernel_bank=bank)
    except Exception as exc:
        logger.error("evaluation failed: %s", exc)
        partial = cfg["out"] / "report.json.partial"
        cfg["out"].mkdir(parents=True, exist_ok=True)
        partial.write_text(json.dumps({"error": str(exc), "config": {
            "methods": cfg["methods"], "folds": cfg["folds"],
            "repetitions": cfg["reps"], "seed": cfg["seed"]}}, indent=2))
        logger.error("partial results written to %s", partial)
        return 1
    export_report(report, cfg["out"])
    print(f"{'method':24s} {'rmse':>8s} {'std':>8s} {'coverage':>9s}")
    for m in sorted(report.methods, key=lambda m: m.rmse_mean):
        print(f"{m.name:24s} {m.rmse_mean:8.4f} {m.rmse_std:8.4f} {m.coverage:9.3f}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise UsageError(f"report file {path} does not exist")
    doc = json.loads(path.read_text())
    from .evaluation import EvaluationReport, MethodResult
    report = EvaluationReport(
        config=doc.get("config", {}),
        methods=[MethodResult(
            name=m["name"], rmse_mean=m["rmse_mean"], rmse_std=m["rmse_std"],
            rmse_per_rep=tuple(m["rmse_per_rep"]), coverage=m["coverage"],
            seconds=m.get("seconds", 0.0),
            rmse_mean_noclamp=m.get("rmse_mean_noclamp", m["rmse_mean"]))
            for m in doc.get("methods", [])],
        eta_average=doc.get("eta_average"),
        bins=doc.get("bins", {}),
    )
    export_report(report, args.out)
    for m in sorted(report.methods, key=lambda m: m.rmse_mean):
        print(f"{m.name:24s} {m.rmse_mean:8.4f} {m.rmse_std:8.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelrec",
        description="Social-network kernel benchmark: data synthesis, kernel "
                    "construction and cross-validated rating prediction.")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset as CSV files")
    p.add_argument("--params", help="JSON file with synthetic parameters")
    p.add_argument("--out", default="data", help="output directory")
    p.set_defaults(func=cmd_synth)

    def common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--methods", help="comma-separated method names")
        p.add_argument("--folds", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--kernel-cache", dest="kernel_cache")
        p.add_argument("--threads", type=int)
        clamp = p.add_mutually_exclusive_group()
        clamp.add_argument("--clamp", dest="clamp", action="store_true", default=None)
        clamp.add_argument("--no-clamp", dest="clamp", action="store_false")
        p.add_argument("--strict-leakage", action="store_true")
        p.add_argument("--shared-eta", action="store_true")
        p.add_argument("--normalize-mni", action="store_true")

    p = sub.add_parser("kernels", help="build all kernels and report PSD validation")
    common(p)
    p.set_defaults(func=cmd_kernels)

    p = sub.add_parser("evaluate", help="run the cross-validated benchmark")
    common(p)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="regenerate summary tables from report.json")
    p.add_argument("report", help="path to an existing report.json")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(USAGE_ERROR, f"error: {exc}\n")
    except (ValueError, FileNotFoundError) as exc:
        parser.exit(USAGE_ERROR, f"error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
