"""Multi-label tabular dataset loading and stratified fold construction.

Supports the MULAN ARFF format (labels named in a companion XML file or
taken as the trailing attributes) and a plain CSV format with named label
columns. Folds come from greedy iterative stratification, which balances
per-label positive counts across folds far better than uniform chunking.
"""

from __future__ import annotations

import hashlib
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .linalg import RandomStream, SparseBinaryMatrix

__all__ = [
    "MultiLabelDataset",
    "FoldAssignment",
    "load_arff",
    "load_csv",
    "save_npz",
    "load_npz",
    "stratify_folds",
    "validation_split",
    "Standardizer",
]


@dataclass
class MultiLabelDataset:
    """Feature matrix plus sparse binary label matrix."""

    name: str
    features: np.ndarray            # (n, d) float64
    labels: SparseBinaryMatrix      # (n, q)
    label_names: list

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError("features must be 2-d")
        if self.features.shape[0] != self.labels.rows:
            raise DataError("feature and label row counts differ")
        if np.isnan(self.features).any() or np.isinf(self.features).any():
            raise DataError("features contain NaN/Inf after load")
        if self.n < 1 or self.q < 2:
            raise DataError(f"need n >= 1 and q >= 2, got n={self.n}, q={self.q}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def q(self) -> int:
        return self.labels.cols

    def cardinality(self) -> float:
        """Mean number of relevant labels per instance."""
        return float(self.labels.nnz()) / self.n

    def density(self) -> float:
        return self.cardinality() / self.q

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.features.tobytes())
        h.update(self.labels.content_hash().encode())
        return h.hexdigest()

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "d": self.d,
            "q": self.q,
            "cardinality": round(self.cardinality(), 6),
            "density": round(self.density(), 6),
            "content_hash": self.content_hash(),
        }


# ---------------------------------------------------------------------------
# ARFF


_ATTR_RE = re.compile(r"@attribute\s+(?:'([^']+)'|\"([^\"]+)\"|(\S+))\s+(.+)", re.IGNORECASE)


def _split_csv_line(line: str) -> list:
    """Split a data line on commas, honoring single/double quotes."""
    out, buf, quote = [], [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
            else:
                buf.append(ch)
        elif ch in ("'", '"'):
            quote = ch
        elif ch == ",":
            out.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    out.append("".join(buf).strip())
    return out


def _read_label_xml(path) -> list:
    tree = ET.parse(path)
    names = []
    for el in tree.iter():
        if el.tag.split("}")[-1] == "label":
            name = el.attrib.get("name")
            if name:
                names.append(name)
    if not names:
        raise DataError(f"{path}: no <label> entries found")
    return names


def load_arff(path, label_count_or_xml) -> MultiLabelDataset:
    """Load a MULAN-style ARFF file.

    ``label_count_or_xml`` is either an integer (labels are the trailing
    attributes) or a path to the companion XML listing label names. Dense
    and sparse ({index value, ...}) data sections are both handled.
    """
    attr_names, attr_kinds = [], []   # kind: 'numeric' | 'nominal01' | 'nominal'
    data_rows = []
    relation = "arff"
    in_data = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            low = line.lower()
            if not in_data:
                if low.startswith("@relation"):
                    parts = line.split(None, 1)
                    relation = parts[1].strip().strip("'\"") if len(parts) > 1 else relation
                elif low.startswith("@attribute"):
                    m = _ATTR_RE.match(line)
                    if not m:
                        raise DataError(f"{path}:{lineno}: malformed @attribute line")
                    name = next(g for g in m.groups()[:3] if g is not None)
                    typ = m.group(4).strip()
                    if typ.startswith("{"):
                        values = {v.strip().strip("'\"") for v in typ.strip("{}").split(",")}
                        kind = "nominal01" if values <= {"0", "1"} else "nominal"
                    elif typ.lower() in ("numeric", "real", "integer") or typ.lower().startswith("numeric"):
                        kind = "numeric"
                    else:
                        raise DataError(f"{path}:{lineno}: unsupported attribute type '{typ}'")
                    attr_names.append(name)
                    attr_kinds.append(kind)
                elif low.startswith("@data"):
                    if not attr_names:
                        raise DataError(f"{path}:{lineno}: @data before any @attribute")
                    in_data = True
                else:
                    raise DataError(f"{path}:{lineno}: unrecognized header line")
            else:
                data_rows.append((lineno, line))

    if not in_data:
        raise DataError(f"{path}: missing @data section")
    n_attr = len(attr_names)

    if isinstance(label_count_or_xml, int):
        if not 2 <= label_count_or_xml < n_attr:
            raise ConfigError(f"label count {label_count_or_xml} out of range for {n_attr} attributes")
        label_pos = list(range(n_attr - label_count_or_xml, n_attr))
    else:
        wanted = _read_label_xml(label_count_or_xml)
        index_of = {name: i for i, name in enumerate(attr_names)}
        missing = [w for w in wanted if w not in index_of]
        if missing:
            raise DataError(f"{path}: label names not found in header: {missing[:5]}")
        label_pos = [index_of[w] for w in wanted]

    label_set = set(label_pos)
    feat_pos = [i for i in range(n_attr) if i not in label_set]
    for i in label_pos:
        if attr_kinds[i] == "nominal":
            raise DataError(f"{path}: label attribute '{attr_names[i]}' is not binary {{0,1}}")

    n = len(data_rows)
    feats = np.zeros((n, len(feat_pos)), dtype=np.float64)
    label_rows = []
    feat_slot = {a: s for s, a in enumerate(feat_pos)}
    label_slot = {a: s for s, a in enumerate(label_pos)}

    for r, (lineno, line) in enumerate(data_rows):
        values = [None] * n_attr
        if line.startswith("{"):
            # sparse row: unlisted attributes are 0
            values = ["0"] * n_attr
            body = line.strip("{}").strip()
            if body:
                for item in body.split(","):
                    parts = item.split()
                    if len(parts) != 2:
                        raise DataError(f"{path}:{lineno}: malformed sparse entry '{item}'")
                    idx = int(parts[0])
                    if not 0 <= idx < n_attr:
                        raise DataError(f"{path}:{lineno}: sparse index {idx} out of range")
                    values[idx] = parts[1]
        else:
            values = _split_csv_line(line)
            if len(values) != n_attr:
                raise DataError(f"{path}:{lineno}: expected {n_attr} values, got {len(values)}")
        row_labels = []
        for a, v in enumerate(values):
            if a in label_slot:
                if v == "1":
                    row_labels.append(label_slot[a])
                elif v != "0":
                    raise DataError(f"{path}:{lineno}: non-binary label value '{v}'")
            else:
                if v == "?":
                    raise DataError(f"{path}:{lineno}: missing feature value")
                try:
                    feats[r, feat_slot[a]] = float(v)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric feature value '{v}'") from None
        label_rows.append(np.sort(np.asarray(row_labels, dtype=np.int64)))

    labels = SparseBinaryMatrix(n, len(label_pos), label_rows)
    names = [attr_names[i] for i in label_pos]
    return MultiLabelDataset(relation, feats, labels, names)


# ---------------------------------------------------------------------------
# CSV


def load_csv(path, label_columns) -> MultiLabelDataset:
    """Load a CSV with a header row; ``label_columns`` names the 0/1 columns."""
    if not label_columns:
        raise ConfigError("label_columns must be a non-empty list")
    with open(path, "r", encoding="utf-8") as fh:
        header = _split_csv_line(fh.readline().rstrip("\n"))
        rows = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            values = _split_csv_line(line)
            if len(values) != len(header):
                raise DataError(f"{path}:{lineno}: ragged row ({len(values)} of {len(header)} columns)")
            rows.append((lineno, values))

    index_of = {name: i for i, name in enumerate(header)}
    missing = [c for c in label_columns if c not in index_of]
    if missing:
        raise ConfigError(f"label columns not in header: {missing}")
    label_pos = [index_of[c] for c in label_columns]
    label_set = set(label_pos)
    feat_pos = [i for i in range(len(header)) if i not in label_set]

    n = len(rows)
    feats = np.zeros((n, len(feat_pos)), dtype=np.float64)
    label_rows = []
    for r, (lineno, values) in enumerate(rows):
        row_labels = []
        for s, a in enumerate(feat_pos):
            try:
                feats[r, s] = float(values[a])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature value '{values[a]}'") from None
        for s, a in enumerate(label_pos):
            v = values[a]
            if v == "1":
                row_labels.append(s)
            elif v != "0":
                raise DataError(f"{path}:{lineno}: label column '{header[a]}' holds '{v}', expected 0/1")
        label_rows.append(np.asarray(sorted(row_labels), dtype=np.int64))

    labels = SparseBinaryMatrix(n, len(label_pos), label_rows)
    import os
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return MultiLabelDataset(name, feats, labels, list(label_columns))


# ---------------------------------------------------------------------------
# Binary round-trip format


def save_npz(path, ds: MultiLabelDataset) -> None:
    flat = (np.concatenate(ds.labels.row_index) if ds.labels.nnz()
            else np.empty(0, dtype=np.int64))
    counts = np.array([r.size for r in ds.labels.row_index], dtype=np.int64)
    np.savez(path, name=np.str_(ds.name), features=ds.features,
             label_cols=flat, label_counts=counts, q=np.int64(ds.q),
             label_names=np.array(ds.label_names, dtype=object))


def load_npz(path) -> MultiLabelDataset:
    with np.load(path, allow_pickle=True) as z:
        counts = z["label_counts"]
        flat = z["label_cols"]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        rows = [flat[offsets[i]:offsets[i + 1]] for i in range(counts.size)]
        labels = SparseBinaryMatrix(int(counts.size), int(z["q"]), rows)
        return MultiLabelDataset(str(z["name"]), z["features"], labels,
                                 [str(s) for s in z["label_names"]])


# ---------------------------------------------------------------------------
# Stratified folds


@dataclass
class FoldAssignment:
    """Per-instance fold ids in [0, folds)."""

    fold_of: np.ndarray
    folds: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def label_spread(self, labels: SparseBinaryMatrix) -> float:
        """Mean over labels of (max - min) positive count across folds."""
        q = labels.cols
        counts = np.zeros((self.folds, q))
        for i, cols_i in enumerate(labels.row_index):
            counts[self.fold_of[i], cols_i] += 1
        return float(np.mean(counts.max(axis=0) - counts.min(axis=0)))


def _content_keys(labels: SparseBinaryMatrix, salt: int) -> np.ndarray:
    """Stable per-instance tie-break keys derived from label-row content.

    Keying on content (not position) makes the assignment permutation
    equivariant: shuffled inputs produce the correspondingly shuffled output.
    """
    salt_bytes = int(salt).to_bytes(8, "little")
    keys = np.empty(labels.rows, dtype=np.uint64)
    for i, cols_i in enumerate(labels.row_index):
        digest = hashlib.blake2b(salt_bytes + cols_i.tobytes(), digest_size=8).digest()
        keys[i] = int.from_bytes(digest, "little")
    return keys


def stratify_folds(labels: SparseBinaryMatrix, folds: int,
                   rng: RandomStream) -> FoldAssignment:
    """Greedy iterative stratification.

    Repeatedly takes the label with the fewest unassigned positives and
    deals its instances to the fold with the greatest remaining demand for
    that label; ties fall back to remaining fold capacity and then to a
    seeded content hash.
    """
    n, q = labels.rows, labels.cols
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    if folds > n:
        raise ConfigError(f"folds={folds} exceeds n={n}")

    salt = int(rng.integers(0, 2**63 - 1))
    keys = _content_keys(labels, salt)

    pos_count = labels.column_sums()
    demand = np.tile(pos_count / folds, (folds, 1))   # (folds, q) remaining demand
    capacity = np.full(folds, n / folds)
    fold_of = np.full(n, -1, dtype=np.int64)
    remaining_pos = pos_count.copy()

    members = [labels.row_index[i] for i in range(n)]
    by_label: list = [[] for _ in range(q)]
    for i, cols_i in enumerate(members):
        for j in cols_i:
            by_label[j].append(i)

    def place(i: int, order_hint: np.ndarray) -> None:
        best = np.flatnonzero(order_hint == order_hint.max())
        if best.size > 1:
            caps = capacity[best]
            best = best[np.flatnonzero(caps == caps.max())]
        f = int(best[int(keys[i]) % best.size])
        fold_of[i] = f
        capacity[f] -= 1.0
        cols_i = members[i]
        demand[f, cols_i] -= 1.0
        remaining_pos[cols_i] -= 1.0

    while True:
        active = np.flatnonzero(remaining_pos > 0)
        if active.size == 0:
            break
        j = int(active[np.argmin(remaining_pos[active])])
        todo = [i for i in by_label[j] if fold_of[i] < 0]
        todo.sort(key=lambda i: (int(keys[i]), i))
        for i in todo:
            place(i, demand[:, j])

    leftovers = sorted((i for i in range(n) if fold_of[i] < 0),
                       key=lambda i: (int(keys[i]), i))
    for i in leftovers:
        place(i, capacity)

    # Folds can end up empty only in tiny pathological inputs; repair from
    # the largest fold so the partition contract holds.
    sizes = np.bincount(fold_of, minlength=folds)
    for f in np.flatnonzero(sizes == 0):
        donor = int(np.argmax(sizes))
        movable = np.flatnonzero(fold_of == donor)[0]
        fold_of[movable] = f
        sizes = np.bincount(fold_of, minlength=folds)

    return FoldAssignment(fold_of, folds)


def validation_split(train_idx: np.ndarray, fraction: float,
                     rng: RandomStream) -> tuple:
    """Hold out a seeded fraction of the training indices for validation."""
    train_idx = np.asarray(train_idx)
    if not 0.0 < fraction < 1.0:
        raise ConfigError("validation fraction must be in (0, 1)")
    perm = rng.permutation(train_idx.size)
    n_val = max(1, int(round(fraction * train_idx.size)))
    val = np.sort(train_idx[perm[:n_val]])
    train = np.sort(train_idx[perm[n_val:]])
    if train.size == 0:
        raise ConfigError("validation split left no training instances")
    return train, val


class Standardizer:
    """Per-feature zero-mean/unit-variance transform fit on training rows."""

    def __init__(self, features: np.ndarray):
        features = np.asarray(features, dtype=np.float64)
        self.mean = features.mean(axis=0)
        std = features.std(axis=0)
        std[std < 1e-12] = 1.0    # constant columns pass through centered
        self.std = std

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std
