"""Command-line interface.

Subcommands:
  run         train one (dataset, selector, fold, seed) and write manifest/CSV
  compare     sweep selectors across folds, write a summary table and charts
  verify      run the statistical verification suite, emit a JSON report
  kfold-cache compute and store a stratified fold assignment
  knn-cache   precompute and store the nearest-neighbor table

Exit status is 0 only when every requested run (and, for verify, every
check) succeeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


from .datasets import Standardizer, stratify_folds
from .errors import ConfigError, ContractError, DataError, EvaluationError, TrainingError
from .experiment import (RunConfig, compare, emit_charts, load_dataset, run)
from .linalg import RandomStream, knn_bruteforce, save_knn_cache
from .selectors import SELECTOR_KINDS
from .verify import run_all, stepsize_conditions


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.from_file(args.config)
    else:
        config = RunConfig()
    if getattr(args, "dataset", None):
        config.dataset.path = args.dataset
        config.dataset.format = args.format
        if args.format == "arff" and args.labels is not None:
            config.dataset.labels = (int(args.labels) if args.labels.isdigit()
                                     else args.labels)
        if args.format == "csv" and args.label_cols:
            config.dataset.label_cols = args.label_cols.split(",")
    if getattr(args, "selector", None):
        config.selector.kind = args.selector
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        config.model.epochs = args.epochs
    if getattr(args, "fold", None) is not None:
        config.protocol.fold = args.fold
    if getattr(args, "folds", None) is not None:
        config.protocol.folds = args.folds
    if getattr(args, "out", None):
        config.out_dir = args.out
    if getattr(args, "run_id", None):
        config.run_id = args.run_id
    return config


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="dataset path")
    p.add_argument("--format", default="synthetic",
                   choices=["arff", "csv", "npz", "synthetic"])
    p.add_argument("--labels", help="ARFF label count or label-list XML path")
    p.add_argument("--label-cols", dest="label_cols",
                   help="comma-separated CSV label column names")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--run-id", dest="run_id")


def cmd_run(args) -> int:
    config = _load_config(args)
    manifest = run(config)
    print(f"run {config.run_id}: best epoch {manifest.best_epoch}, "
          f"test {json.dumps(manifest.test_at_best, sort_keys=True)}")
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args)
    kinds = args.selectors.split(",") if args.selectors else list(SELECTOR_KINDS)
    for kind in kinds:
        if kind not in SELECTOR_KINDS:
            raise ConfigError(f"unknown selector '{kind}'")
    summary = compare(config, kinds, folds=args.folds)
    for kind in kinds:
        means = summary["means"][kind]
        print(f"{kind:>9}: " + "  ".join(f"{m}={means[m]:.4f}" for m in means))
    if summary["failures"]:
        for fail in summary["failures"]:
            print(f"FAILED {fail['selector']} fold {fail['fold']}: {fail['error']}",
                  file=sys.stderr)
    if args.charts:
        flat = [mf for kind in kinds for mf in summary["manifests"][kind]]
        for path in emit_charts(flat, config.out_dir, stem=config.run_id):
            print(f"chart: {path}")
    return 1 if summary["failures"] else 0


def cmd_verify(args) -> int:
    reports = run_all(seed=args.seed or 0, quick=args.quick)
    payload = {
        "reports": [r.to_dict() for r in reports],
        "optimizer_schedule_conditions": stepsize_conditions(),
    }
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "verify_report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    ok = True
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.lemma_id}: trials={r.trials} "
              f"max_violation={r.max_violation:.3e} ({r.runtime_s:.1f}s)")
        ok = ok and r.passed
    print(f"report: {path}")
    return 0 if ok else 1


def cmd_kfold_cache(args) -> int:
    config = _load_config(args)
    ds = load_dataset(config.dataset, config.seed)
    assignment = stratify_folds(ds.labels, args.folds or config.protocol.folds,
                                RandomStream(config.seed, purpose="folds"))
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{ds.name}_folds{assignment.folds}_seed{config.seed}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"dataset": ds.manifest(), "folds": assignment.folds,
                   "seed": config.seed,
                   "label_spread": assignment.label_spread(ds.labels),
                   "fold_of": assignment.fold_of.tolist()}, fh)
    print(f"fold cache: {path}")
    return 0


def cmd_knn_cache(args) -> int:
    config = _load_config(args)
    ds = load_dataset(config.dataset, config.seed)
    features = Standardizer(ds.features).apply(ds.features) \
        if config.protocol.standardize else ds.features
    table = knn_bruteforce(features, args.k)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{ds.name}_knn{args.k}.txt")
    save_knn_cache(path, table, ds.content_hash())
    print(f"knn cache: {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="d2ace",
                                     description="multi-label batch selection harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single training run")
    _add_common(p_run)
    p_run.add_argument("--selector", choices=SELECTOR_KINDS, default=None)
    p_run.add_argument("--fold", type=int)
    p_run.add_argument("--folds", type=int)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="selector sweep over folds")
    _add_common(p_cmp)
    p_cmp.add_argument("--selectors", help="comma-separated selector kinds")
    p_cmp.add_argument("--folds", type=int)
    p_cmp.add_argument("--charts", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify", help="statistical verification suite")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--quick", action="store_true",
                       help="reduced Monte Carlo draw counts")
    p_ver.add_argument("--out")
    p_ver.set_defaults(func=cmd_verify)

    p_kf = sub.add_parser("kfold-cache", help="store a stratified fold assignment")
    _add_common(p_kf)
    p_kf.add_argument("--folds", type=int, default=5)
    p_kf.set_defaults(func=cmd_kfold_cache)

    p_knn = sub.add_parser("knn-cache", help="store the nearest-neighbor table")
    _add_common(p_knn)
    p_knn.add_argument("--k", type=int, default=5)
    p_knn.set_defaults(func=cmd_knn_cache)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, DataError, EvaluationError,
            TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
