"""Experiment orchestration: single runs, k-fold comparisons, charts.

A run trains the MLP on one fold with one selector: warm-up epochs use
shuffled batches, later epochs use the selector's distribution, refreshed
once per epoch from a full-dataset forward pass. Validation metrics are
tracked every epoch and the manifest reports the test metrics at the best
validation epoch. Everything a run touches is seeded through named streams,
so replaying a manifest's configuration reproduces its metrics CSV byte for
byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import (MultiLabelDataset, Standardizer, load_arff, load_csv,
                       load_npz, stratify_folds, validation_split)
from .errors import ConfigError
from .linalg import RandomStream, SparseBinaryMatrix, knn_bruteforce
from .metrics import EvalReport, evaluate
from .mlp import (AdamState, LrSchedule, MlpModel, backward_and_update,
                  bce_loss_matrix, save_checkpoint)
from .sampling import SamplingSchedule, decile_loss_histogram
from .selectors import (EpochSnapshot, SelectorConfig, build_selector)
from .tracking import PredictionHistory, compute_hardness, compute_uncertainty

__all__ = [
    "DatasetConfig",
    "ModelConfig",
    "ProtocolConfig",
    "RunConfig",
    "RunManifest",
    "make_synthetic",
    "load_dataset",
    "run",
    "compare",
    "emit_charts",
]

_METRIC_DIRECTION = {"macro_auc": 1, "macro_f1": 1, "map": 1, "ranking_loss": -1}
_FLOAT_FMT = "{:.12g}"


@dataclass
class DatasetConfig:
    path: str = ""
    format: str = "synthetic"           # arff | csv | npz | synthetic
    labels: object = None               # arff: trailing count or xml path
    label_cols: list = field(default_factory=list)
    synthetic_n: int = 400
    synthetic_d: int = 20
    synthetic_q: int = 8


@dataclass
class ModelConfig:
    hidden: list = field(default_factory=lambda: [256])
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 100
    warmup_epochs: int = 10


@dataclass
class ProtocolConfig:
    folds: int = 5
    fold: int = 0
    val_fraction: float = 0.2
    standardize: bool = True
    importance_correction: bool = False
    model_selection: str = "macro_auc"
    dump_diagnostics: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    run_id: str = "run"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: dict = field(default_factory=dict)   # overrides for SamplingSchedule
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    out_dir: str = "runs"

    def sampling_schedule(self) -> SamplingSchedule:
        base = {
            "total_epochs": self.model.epochs,
            "warmup_epochs": self.model.warmup_epochs,
        }
        base.update(self.schedule)
        return SamplingSchedule(**base)

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        for key, sub in (("dataset", DatasetConfig), ("selector", SelectorConfig),
                         ("model", ModelConfig), ("protocol", ProtocolConfig)):
            if key in data and isinstance(data[key], dict):
                data[key] = sub(**data[key])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def make_synthetic(seed: int, n: int = 400, d: int = 20, q: int = 8,
                   noise: float = 0.5, name: str = "synthetic") -> MultiLabelDataset:
    """Learnable multi-label data: correlated linear logits, per-label
    density quantiles, guaranteed presence of both classes per label."""
    rng = RandomStream(seed, purpose="synthetic-data")
    x = rng.normal(size=(n, d))
    mixing = rng.normal(size=(d, q)) / np.sqrt(d)
    # overlapping label groups induce correlations
    for j in range(1, q):
        mixing[:, j] = 0.6 * mixing[:, j] + 0.4 * mixing[:, j - 1]
    logits = x @ mixing + noise * rng.normal(size=(n, q))
    densities = 0.15 + 0.25 * rng.random(q)
    y = np.zeros((n, q))
    for j in range(q):
        cut = np.quantile(logits[:, j], 1.0 - densities[j])
        y[:, j] = (logits[:, j] > cut).astype(float)
        if y[:, j].sum() in (0, n):                 # keep both classes present
            y[int(rng.integers(0, n)), j] = 1.0 - y[0, j]
    return MultiLabelDataset(name, x, SparseBinaryMatrix.from_dense(y),
                             [f"label_{j}" for j in range(q)])


def load_dataset(cfg: DatasetConfig, seed: int = 0) -> MultiLabelDataset:
    if cfg.format == "arff":
        return load_arff(cfg.path, cfg.labels)
    if cfg.format == "csv":
        return load_csv(cfg.path, cfg.label_cols)
    if cfg.format == "npz":
        return load_npz(cfg.path)
    if cfg.format == "synthetic":
        return make_synthetic(seed, cfg.synthetic_n, cfg.synthetic_d, cfg.synthetic_q)
    raise ConfigError(f"unknown dataset format '{cfg.format}'")


@dataclass
class RunManifest:
    run_id: str
    seed: int
    config: dict
    dataset: dict
    fold: int
    epoch_rows: list
    best_epoch: int
    best_val: dict
    test_at_best: dict
    selector_seconds: list
    train_seconds: list
    metrics_csv_sha256: str
    fold_label_spread: float

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


_CSV_COLUMNS = ["epoch", "train_loss",
                "val_macro_auc", "val_macro_f1", "val_ranking_loss", "val_map",
                "test_macro_auc", "test_macro_f1", "test_ranking_loss", "test_map"]
_DIAG_COLUMNS = ["uncertainty_rowsum_mean", "hardness_rowsum_mean"]


def _rows_to_csv(rows: list, diagnostics: bool) -> str:
    cols = _CSV_COLUMNS + (_DIAG_COLUMNS if diagnostics else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([row["epoch"]] +
                        [_FLOAT_FMT.format(row[c]) for c in cols[1:]])
    return buf.getvalue()


def _report_prefix(report: EvalReport, prefix: str) -> dict:
    return {f"{prefix}_{k}": v for k, v in report.row().items()}


def run(config: RunConfig, dataset: MultiLabelDataset | None = None,
        write_outputs: bool = True) -> RunManifest:
    """Train one (dataset, fold, selector, seed) combination."""
    ds = dataset if dataset is not None else load_dataset(config.dataset, config.seed)
    proto = config.protocol
    if not 0 <= proto.fold < proto.folds:
        raise ConfigError(f"fold {proto.fold} outside [0, {proto.folds})")
    if proto.model_selection not in _METRIC_DIRECTION:
        raise ConfigError(f"unknown model-selection metric '{proto.model_selection}'")

    fold_rng = RandomStream(config.seed, purpose="folds")
    assignment = stratify_folds(ds.labels, proto.folds, fold_rng)
    test_idx = assignment.test_indices(proto.fold)
    pool_idx = assignment.train_indices(proto.fold)
    train_idx, val_idx = validation_split(
        pool_idx, proto.val_fraction,
        RandomStream(config.seed, fold=proto.fold, purpose="valsplit"))

    x_train = ds.features[train_idx]
    if proto.standardize:
        scaler = Standardizer(x_train)
        x_train = scaler.apply(x_train)
        x_val = scaler.apply(ds.features[val_idx])
        x_test = scaler.apply(ds.features[test_idx])
    else:
        x_val = ds.features[val_idx]
        x_test = ds.features[test_idx]

    def sub_labels(idx):
        return SparseBinaryMatrix(idx.size, ds.q,
                                  [ds.labels.row_index[i] for i in idx])

    labels_train = sub_labels(train_idx)
    labels_val = sub_labels(val_idx)
    labels_test = sub_labels(test_idx)
    y_train = labels_train.denseify()
    n_train = train_idx.size

    selector = build_selector(config.selector)
    neighbor_table = None
    if selector.needs_neighbors:
        k = min(config.selector.neighbors, n_train - 1)
        neighbor_table = knn_bruteforce(x_train, k)

    mc = config.model
    model = MlpModel([ds.d] + list(mc.hidden) + [ds.q],
                     rng=RandomStream(config.seed, fold=proto.fold, purpose="init"))
    adam = AdamState.for_model(model, beta1=mc.beta1, beta2=mc.beta2,
                               weight_decay=mc.weight_decay)
    lr_schedule = LrSchedule(mc.learning_rate, mc.warmup_epochs)
    schedule = config.sampling_schedule()
    tracker = PredictionHistory(n_train, ds.q, window=config.selector.window,
                                flip_smoothing=config.selector.flip_smoothing)

    rows, selector_seconds, train_seconds = [], [], []
    decile_rows = []
    abort_error = None
    try:
        for t in range(1, mc.epochs + 1):
            lr = lr_schedule.lr(t)
            probs = model.forward(x_train)
            loss_matrix = bce_loss_matrix(probs, y_train)
            tracker.push(probs)
            snap = EpochSnapshot(t, tracker, loss_matrix, labels_train, schedule,
                                 neighbor_table)
            rng_batches = RandomStream(config.seed, fold=proto.fold, epoch=t,
                                       purpose="batches")
            t0 = time.perf_counter()
            result = selector.select(snap, min(mc.batch_size, n_train), rng_batches)
            t1 = time.perf_counter()
            for batch in result.batches:
                if proto.importance_correction and result.probs is not None:
                    w = 1.0 / (n_train * result.probs[batch])
                else:
                    w = None
                backward_and_update(model, adam, x_train[batch], y_train[batch],
                                    w, lr)
            t2 = time.perf_counter()
            selector_seconds.append(t1 - t0)
            train_seconds.append(t2 - t1)

            row = {"epoch": t, "train_loss": float(loss_matrix.sum(axis=1).mean())}
            row.update(_report_prefix(evaluate(model.forward(x_val), labels_val, t), "val"))
            row.update(_report_prefix(evaluate(model.forward(x_test), labels_test, t), "test"))
            if proto.dump_diagnostics:
                u = compute_uncertainty(tracker, config.selector.entropy_mix)
                h = compute_hardness(loss_matrix, tracker.ema_flip)
                row["uncertainty_rowsum_mean"] = float(u.sum(axis=1).mean())
                row["hardness_rowsum_mean"] = float(h.sum(axis=1).mean())
                if result.probs is not None:
                    hist = decile_loss_histogram(result.probs,
                                                 loss_matrix.sum(axis=1))
                    for decile in range(10):
                        decile_rows.append([t, decile] + hist[decile].tolist())
            rows.append(row)
    except TrainingError as exc:
        abort_error = exc           # divergence: persist the partial manifest

    if rows:
        direction = _METRIC_DIRECTION[proto.model_selection]
        key = f"val_{proto.model_selection}"
        scores = np.asarray([direction * r[key] for r in rows])
        best = int(np.argmax(scores))
        best_epoch = rows[best]["epoch"]
        best_val = {k: rows[best][f"val_{k}"] for k in _METRIC_DIRECTION}
        test_at_best = {k: rows[best][f"test_{k}"] for k in _METRIC_DIRECTION}
    else:
        best_epoch, best_val, test_at_best = 0, {}, {}
    csv_text = _rows_to_csv(rows, proto.dump_diagnostics)
    manifest = RunManifest(
        run_id=config.run_id,
        seed=config.seed,
        config=config.to_dict(),
        dataset=ds.manifest(),
        fold=proto.fold,
        epoch_rows=rows,
        best_epoch=best_epoch,
        best_val=best_val,
        test_at_best=test_at_best,
        selector_seconds=selector_seconds,
        train_seconds=train_seconds,
        metrics_csv_sha256=hashlib.sha256(csv_text.encode()).hexdigest(),
        fold_label_spread=assignment.label_spread(ds.labels),
        error=str(abort_error) if abort_error is not None else None,
    )
    if write_outputs:
        os.makedirs(config.out_dir, exist_ok=True)
        stem = f"{config.run_id}_{config.selector.kind}_fold{proto.fold}_seed{config.seed}"
        with open(os.path.join(config.out_dir, stem + "_metrics.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
        manifest.save(os.path.join(config.out_dir, stem + "_manifest.json"))
        save_checkpoint(os.path.join(config.out_dir, stem + "_checkpoint.npz"),
                        model, adam)
        if decile_rows:
            with open(os.path.join(config.out_dir, stem + "_sampling_deciles.csv"),
                      "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["epoch", "decile", "high_loss", "mid_loss",
                                 "low_loss"])
                writer.writerows(decile_rows)
    if abort_error is not None:
        raise abort_error
    return manifest


def compare(config: RunConfig, selector_kinds: list, folds: int | None = None,
            dataset: MultiLabelDataset | None = None,
            write_outputs: bool = True) -> dict:
    """Per-(selector, fold) runs, mean test metrics, and per-metric ranks."""
    if len(selector_kinds) < 2:
        raise ConfigError("compare needs at least two selectors")
    folds = folds if folds is not None else config.protocol.folds
    ds = dataset if dataset is not None else load_dataset(config.dataset, config.seed)

    manifests: dict = {kind: [] for kind in selector_kinds}
    failures = []
    for kind in selector_kinds:
        for fold in range(folds):
            sub = RunConfig.from_dict(config.to_dict())
            sub.selector.kind = kind
            sub.protocol.fold = fold
            sub.protocol.folds = folds
            sub.run_id = f"{config.run_id}"
            try:
                manifests[kind].append(run(sub, dataset=ds,
                                           write_outputs=write_outputs))
            except Exception as exc:   # a failing fold must not sink the sweep
                failures.append({"selector": kind, "fold": fold, "error": str(exc)})

    means = {}
    for kind in selector_kinds:
        if manifests[kind]:
            means[kind] = {m: float(np.mean([mf.test_at_best[m]
                                             for mf in manifests[kind]]))
                           for m in _METRIC_DIRECTION}
        else:
            means[kind] = {m: float("nan") for m in _METRIC_DIRECTION}

    ranks = {kind: {} for kind in selector_kinds}
    for metric, direction in _METRIC_DIRECTION.items():
        vals = np.asarray([means[k][metric] for k in selector_kinds])
        order = -direction * vals
        # competition ranks with ties sharing the better rank
        for i, kind in enumerate(selector_kinds):
            if np.isnan(vals[i]):
                ranks[kind][metric] = float("nan")
            else:
                ranks[kind][metric] = 1 + int(np.sum(order < order[i]))

    summary = {"dataset": ds.manifest(), "folds": folds, "means": means,
               "ranks": ranks, "failures": failures,
               "manifests": manifests}
    if write_outputs:
        os.makedirs(config.out_dir, exist_ok=True)
        path = os.path.join(config.out_dir, f"{config.run_id}_summary.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["selector"]
            for m in _METRIC_DIRECTION:
                header += [f"{m}_mean", f"{m}_rank"]
            writer.writerow(header)
            for kind in selector_kinds:
                row = [kind]
                for m in _METRIC_DIRECTION:
                    row += [_FLOAT_FMT.format(means[kind][m]), ranks[kind][m]]
                writer.writerow(row)
    return summary


def emit_charts(manifests: list, out_dir: str, stem: str = "charts") -> list:
    """Loss/validation line charts and a per-selector wall-clock bar chart."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not manifests:
        raise ConfigError("emit_charts needs at least one manifest")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def label_of(mf):
        return f"{mf.config['selector']['kind']}/f{mf.fold}/s{mf.seed}"

    specs = [("train_loss", "training loss", f"{stem}_loss.svg"),
             ("val_macro_auc", "validation Macro-AUC", f"{stem}_val.svg")]
    for column, title, filename in specs:
        fig, ax = plt.subplots(figsize=(7, 4.2))
        plotted = 0
        for mf in manifests:
            ys = [row.get(column) for row in mf.epoch_rows]
            if not ys or any(y is None for y in ys):
                warnings.warn(f"{label_of(mf)}: column '{column}' missing, series omitted")
                continue
            ax.plot([row["epoch"] for row in mf.epoch_rows], ys, label=label_of(mf))
            plotted += 1
        ax.set_xlabel("epoch")
        ax.set_ylabel(title)
        if plotted:
            ax.legend(fontsize=7)
        path = os.path.join(out_dir, filename)
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.2))
    names = [label_of(mf) for mf in manifests]
    sel = [sum(mf.selector_seconds) for mf in manifests]
    trn = [sum(mf.train_seconds) for mf in manifests]
    pos = np.arange(len(names))
    ax.bar(pos, sel, label="selector")
    ax.bar(pos, trn, bottom=sel, label="trainer")
    ax.set_xticks(pos)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("seconds")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, f"{stem}_time.svg")
    fig.savefig(path, format="svg")
    plt.close(fig)
    written.append(path)
    return written
