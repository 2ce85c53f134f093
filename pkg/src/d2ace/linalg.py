"""Dense/sparse matrix primitives and seedable random streams.

Dense matrices are plain float64 ``numpy`` arrays in row-major order; the
helpers here add the shape checking the rest of the package relies on.
``SparseBinaryMatrix`` is the package's representation for 0/1 matrices
(ground-truth labels, local label appearance) whose nonzero structure drives
the sparse weighting path. ``RandomStream`` gives every consumer of
randomness a named, replayable stream.
"""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp

from .errors import ConfigError, ShapeError

__all__ = [
    "SparseBinaryMatrix",
    "RandomStream",
    "matmul",
    "sparse_dense_matmul",
    "hadamard",
    "knn_bruteforce",
    "save_knn_cache",
    "load_knn_cache",
]


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d array, got ndim={a.ndim}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} x {b.shape})")
    return a @ b


def hadamard(a, b) -> np.ndarray:
    """Element-wise product of two same-shape matrices."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes differ ({a.shape} vs {b.shape})")
    return a * b


@dataclass
class SparseBinaryMatrix:
    """0/1 matrix stored as per-row sorted column-index arrays.

    Column indices are strictly increasing within each row, which makes
    unions/intersections cheap and keeps iteration order deterministic.
    """

    rows: int
    cols: int
    row_index: list = field(repr=False)

    def __post_init__(self):
        if len(self.row_index) != self.rows:
            raise ShapeError("row_index length must equal rows")
        cleaned = []
        for i, cols_i in enumerate(self.row_index):
            arr = np.asarray(cols_i, dtype=np.int64)
            if arr.size and (np.any(np.diff(arr) <= 0)):
                raise ShapeError(f"row {i}: column indices must be strictly increasing")
            if arr.size and (arr[0] < 0 or arr[-1] >= self.cols):
                raise ShapeError(f"row {i}: column index out of range")
            cleaned.append(arr)
        self.row_index = cleaned

    @classmethod
    def from_dense(cls, a) -> "SparseBinaryMatrix":
        a = np.asarray(a)
        rows = [np.flatnonzero(a[i] != 0).astype(np.int64) for i in range(a.shape[0])]
        return cls(a.shape[0], a.shape[1], rows)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "SparseBinaryMatrix":
        return cls(rows, cols, [np.empty(0, dtype=np.int64) for _ in range(rows)])

    def nnz(self) -> int:
        return int(sum(r.size for r in self.row_index))

    def denseify(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.float64)
        for i, cols_i in enumerate(self.row_index):
            out[i, cols_i] = 1.0
        return out

    def row(self, i: int) -> np.ndarray:
        return self.row_index[i]

    def row_sums(self) -> np.ndarray:
        return np.array([r.size for r in self.row_index], dtype=np.float64)

    def column_sums(self) -> np.ndarray:
        out = np.zeros(self.cols, dtype=np.float64)
        for cols_i in self.row_index:
            out[cols_i] += 1.0
        return out

    def to_csr(self) -> sp.csr_matrix:
        """CSR view with unit data, for the heavy sparse products."""
        indptr = np.zeros(self.rows + 1, dtype=np.int64)
        for i, cols_i in enumerate(self.row_index):
            indptr[i + 1] = indptr[i] + cols_i.size
        if self.nnz():
            indices = np.concatenate(self.row_index)
        else:
            indices = np.empty(0, dtype=np.int64)
        data = np.ones(indices.size, dtype=np.float64)
        return sp.csr_matrix((data, indices, indptr), shape=(self.rows, self.cols))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64([self.rows, self.cols]).tobytes())
        for cols_i in self.row_index:
            h.update(cols_i.tobytes())
            h.update(b";")
        return h.hexdigest()


def sparse_dense_matmul(z: SparseBinaryMatrix, c) -> np.ndarray:
    """Product of a sparse 0/1 matrix with a dense matrix.

    Row ``i`` of the result is the sum of the rows of ``c`` selected by the
    set bits of row ``i``; arithmetic work is proportional to nnz(z) x c.cols.
    """
    c = _as_matrix(c)
    if z.cols != c.shape[0]:
        raise ShapeError(f"sparse_dense_matmul: inner dimensions differ ({z.rows}x{z.cols} x {c.shape})")
    out = np.zeros((z.rows, c.shape[1]), dtype=np.float64)
    for i, cols_i in enumerate(z.row_index):
        if cols_i.size:
            out[i] = c[cols_i].sum(axis=0)
    return out


def knn_bruteforce(features, k: int) -> np.ndarray:
    """Exact k-nearest-neighbor table under Euclidean distance.

    Returns an (n, k) integer array; row ``i`` holds the indices of the k
    closest other rows, nearest first, distance ties broken by ascending
    index. O(n^2 d) — intended as a once-per-dataset precompute.
    """
    x = _as_matrix(features)
    n = x.shape[0]
    if k >= n:
        raise ConfigError(f"knn_bruteforce: k={k} must be < n={n}")
    if k < 0:
        raise ConfigError("knn_bruteforce: k must be >= 0")
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.clip(d2, 0.0, None, out=d2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)


def save_knn_cache(path, neighbors: np.ndarray, dataset_hash: str) -> None:
    """Write a neighbor table as a text file keyed by (dataset hash, k)."""
    neighbors = np.asarray(neighbors, dtype=np.int64)
    k = neighbors.shape[1] if neighbors.ndim == 2 else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dataset_hash={dataset_hash} k={k}\n")
        for i in range(neighbors.shape[0]):
            row = ",".join(str(int(v)) for v in neighbors[i])
            fh.write(f"{i},{row}\n" if k else f"{i}\n")


def load_knn_cache(path, dataset_hash: str, k: int) -> np.ndarray | None:
    """Load a cached neighbor table; returns None on a key mismatch."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != f"# dataset_hash={dataset_hash} k={k}":
                return None
            rows = []
            for line in fh:
                parts = line.strip().split(",")
                rows.append([int(v) for v in parts[1:]])
    except OSError:
        return None
    return np.asarray(rows, dtype=np.int64).reshape(len(rows), k)


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8")) & 0xFFFFFFFF


class RandomStream:
    """Seedable random stream identified by (seed, run, fold, epoch, purpose).

    Identical identifiers reproduce identical draw sequences; distinct
    purposes give statistically independent streams, so consumers never
    contend for position in a shared sequence.
    """

    def __init__(self, seed: int, run: int = 0, fold: int = 0, epoch: int = 0,
                 purpose: str = ""):
        self.seed = int(seed)
        self.stream_id = (int(run), int(fold), int(epoch), purpose)
        key = (int(run), int(fold), int(epoch), _purpose_code(purpose))
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def categorical(self, probs: np.ndarray, size: int) -> np.ndarray:
        """Inverse-CDF categorical draws; deterministic given the stream."""
        cdf = np.cumsum(np.asarray(probs, dtype=np.float64))
        cdf[-1] = 1.0
        u = self._gen.random(size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)
